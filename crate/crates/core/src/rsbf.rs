//! Robust joint design of the transmit beamformer `w` and the IRS phases `q`.
//!
//! Both algorithms share one two-layer loop. The outer layer refreshes the
//! sample weights `μ` for the current `(w, q)`. The inner layer alternates a
//! `w` update and a `q` update until the surrogate stops moving by more than
//! `ε`.
//!
//! * Colluding: the `w` step is the closed-form generalized eigenvector and
//!   the `q` step is a Charnes-Cooper SDR.
//! * Non-colluding: both steps are min-max Charnes-Cooper SDRs.
//!
//! All SDPs are posed in noise-normalized units (channel gains divided by
//! `σ0²`, transmit covariance divided by `P_max`) so the solver sees O(1)
//! data whatever the physical path loss is. Objective values reported here
//! are the plain ratios `(signal + σ0²) / (leakage + σ0²)`, or `log2` of them
//! where noted.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    build_sample_bank, ChannelError, ChannelRealization, SampleBank, SystemConfig, UncertaintySet,
    WeightRule,
};
use crate::numerics::{
    dominant_rank_one, eigh, generalized_rayleigh_max, outer, serde_complex, CMatrix, CVector,
    NumericsError,
};
use crate::sdp::{solve, Relation, SdpError, SdpProblem, SdpStatus, Sense};

/// SDP solutions count as rank one when `λ2 / λ1` is at most this.
pub const RANK_ONE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RsbfError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

pub type Result<T> = std::result::Result<T, RsbfError>;

/// How the eavesdroppers' signals combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Sum of Eve SNRs.
    Colluding,
    /// Strongest single Eve.
    #[serde(rename = "noncolluding", alias = "non-colluding")]
    NonColluding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    IterationCapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    W,
    Q,
}

/// What one SDR-based step did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub kind: StepKind,
    pub sdp_status: SdpStatus,
    /// Relaxation bound on the step's ratio, when the SDP solved.
    pub bound: Option<f64>,
    /// Ratio at the recovered candidate, before comparison with the input.
    pub candidate: f64,
    /// Ratio actually returned.
    pub value: f64,
    pub rank_one: bool,
    pub kept_input: bool,
}

/// Result of a `w` or `q` step.
#[derive(Debug, Clone)]
pub struct Step {
    pub vector: CVector,
    pub value: f64,
    pub report: Option<StepReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformingSolution {
    #[serde(with = "serde_complex::vector")]
    pub w: CVector,
    #[serde(with = "serde_complex::vector")]
    pub q: CVector,
    /// `log2` of the surrogate ratio at the final weights.
    pub objective: f64,
    /// One list per outer round, `log2` ratios.
    pub inner_history: Vec<Vec<f64>>,
    pub outer_history: Vec<f64>,
    pub status: SolveStatus,
    /// Total inner iterations.
    pub iterations: usize,
    pub sdp_failures: usize,
    pub steps: Vec<StepReport>,
    pub mode: Mode,
    /// Sample weights of the final outer round.
    pub weights: Vec<Vec<f64>>,
}

impl BeamformingSolution {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serialization cannot fail")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// `a = H w`, so that `q H w = Σ q_n a_n`.
fn column_gain(h: &CMatrix, w: &CVector) -> CVector {
    h * w
}

/// `b = conj(H^T q)`, so that `q H w = b^H w`.
fn row_gain(q: &CVector, h: &CMatrix) -> CVector {
    (h.transpose() * q).map(|z| z.conj())
}

/// `|q H w|²`.
pub fn gain(q: &CVector, h: &CMatrix, w: &CVector) -> f64 {
    q.iter()
        .zip(column_gain(h, w).iter())
        .map(|(a, b)| a * b)
        .sum::<Complex64>()
        .norm_sqr()
}

/// Weighted leakage `Σ_t μ_t |q G_t w|²` for each Eve.
fn leakages(q: &CVector, w: &CVector, bank: &SampleBank) -> Vec<f64> {
    bank.samples
        .iter()
        .zip(&bank.weights)
        .map(|(samples, mu)| samples.iter().zip(mu).map(|(g, m)| m * gain(q, g, w)).sum())
        .collect()
}

/// `(|qHw|² + σ²) / (Σ_k leak_k + σ²)`.
pub fn colluding_ratio(
    w: &CVector,
    q: &CVector,
    h_ab: &CMatrix,
    bank: &SampleBank,
    sigma0_sq: f64,
) -> f64 {
    let leak: f64 = leakages(q, w, bank).iter().sum();
    (gain(q, h_ab, w) + sigma0_sq) / (leak + sigma0_sq)
}

/// `min_k (|qHw|² + σ²) / (leak_k + σ²)`; with no Eves the denominator is `σ²`.
pub fn noncolluding_ratio(
    w: &CVector,
    q: &CVector,
    h_ab: &CMatrix,
    bank: &SampleBank,
    sigma0_sq: f64,
) -> f64 {
    let worst = leakages(q, w, bank).into_iter().fold(0.0, f64::max);
    (gain(q, h_ab, w) + sigma0_sq) / (worst + sigma0_sq)
}

pub fn surrogate_ratio(
    mode: Mode,
    w: &CVector,
    q: &CVector,
    h_ab: &CMatrix,
    bank: &SampleBank,
    sigma0_sq: f64,
) -> f64 {
    match mode {
        Mode::Colluding => colluding_ratio(w, q, h_ab, bank, sigma0_sq),
        Mode::NonColluding => noncolluding_ratio(w, q, h_ab, bank, sigma0_sq),
    }
}

fn check_dims(q: &CVector, w: &CVector, h_ab: &CMatrix, bank: &SampleBank) -> Result<()> {
    let (n, m) = h_ab.shape();
    if q.len() != n || w.len() != m {
        return Err(RsbfError::Dimension(format!(
            "q has {} entries and w has {} for a {n}x{m} cascade",
            q.len(),
            w.len()
        )));
    }
    for (samples, mu) in bank.samples.iter().zip(&bank.weights) {
        if samples.len() != mu.len() || samples.iter().any(|g| g.shape() != (n, m)) {
            return Err(RsbfError::Dimension(
                "sample bank does not match the cascade".into(),
            ));
        }
    }
    Ok(())
}

/// Per Eve, weights proportional to `|q G_t w|²` (or all mass on the largest
/// one). A zero total falls back to uniform weights.
pub fn update_weights(
    w: &CVector,
    q: &CVector,
    bank: &SampleBank,
    rule: WeightRule,
) -> Vec<Vec<f64>> {
    bank.samples
        .iter()
        .map(|samples| {
            let d = samples.len();
            let powers: Vec<f64> = samples.iter().map(|g| gain(q, g, w)).collect();
            let total: f64 = powers.iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                return vec![1.0 / d as f64; d];
            }
            match rule {
                WeightRule::Proportional => powers.iter().map(|p| p / total).collect(),
                WeightRule::WorstVertex => {
                    let mut best = 0;
                    for (t, p) in powers.iter().enumerate() {
                        if *p > powers[best] {
                            best = t;
                        }
                    }
                    (0..d).map(|t| if t == best { 1.0 } else { 0.0 }).collect()
                }
            }
        })
        .collect()
}

/// How a randomized candidate is mapped back to the feasible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Recovery {
    /// `r_n -> exp(j arg r_n)`.
    Phases,
    /// `r -> sqrt(P) r / ‖r‖`.
    Power(f64),
}

fn project(r: &CVector, recovery: Recovery) -> CVector {
    match recovery {
        Recovery::Phases => r.map(|z| {
            if z.norm() > 0.0 {
                z / z.norm()
            } else {
                Complex64::new(1.0, 0.0)
            }
        }),
        Recovery::Power(p) => {
            let norm = r.norm();
            if norm > 0.0 {
                r.scale(p.sqrt() / norm)
            } else {
                let mut e = CVector::zeros(r.len());
                e[0] = Complex64::new(p.sqrt(), 0.0);
                e
            }
        }
    }
}

/// Best of `trials` draws `r ~ CN(0, lifted)` after projection onto the
/// feasible set, judged by `evaluator`.
pub fn gaussian_randomize(
    lifted: &CMatrix,
    evaluator: impl Fn(&CVector) -> f64,
    trials: usize,
    recovery: Recovery,
    rng: &mut impl Rng,
) -> (CVector, f64) {
    let n = lifted.nrows();
    let eig = eigh(lifted);
    // round-off eigenvalues would otherwise leak noise into rank-one lifts
    let floor = 1e-12 * eig.max_value().max(0.0);
    let mut factor = eig.vectors.clone();
    for (j, mut col) in factor.column_iter_mut().enumerate() {
        let l = if eig.values[j] > floor {
            eig.values[j]
        } else {
            0.0
        };
        col *= Complex64::new(l.sqrt(), 0.0);
    }
    let mut best: Option<(CVector, f64)> = None;
    for _ in 0..trials.max(1) {
        let z = CVector::from_fn(n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        let cand = project(&(&factor * z), recovery);
        let value = evaluator(&cand);
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((cand, value));
        }
    }
    best.expect("at least one trial")
}

fn selector(n: usize, k: usize) -> CMatrix {
    let mut e = CMatrix::zeros(n, n);
    e[(k, k)] = Complex64::new(1.0, 0.0);
    e
}

/// Normalized `Σ_t μ_t c_t c_t^H` with `c_t = G_t w`, per Eve.
fn eve_phase_matrices(w: &CVector, bank: &SampleBank, sigma0_sq: f64, n: usize) -> Vec<CMatrix> {
    bank.samples
        .iter()
        .zip(&bank.weights)
        .map(|(samples, mu)| {
            let mut acc = CMatrix::zeros(n, n);
            for (g, m) in samples.iter().zip(mu) {
                let c = column_gain(g, w);
                acc += outer(&c, &c).scale(m / sigma0_sq);
            }
            acc
        })
        .collect()
}

/// Normalized `(P/σ²) Σ_t μ_t b_t b_t^H` with `b_t = conj(G_t^T q)`, per Eve.
fn eve_beam_matrices(q: &CVector, bank: &SampleBank, scale: f64, m: usize) -> Vec<CMatrix> {
    bank.samples
        .iter()
        .zip(&bank.weights)
        .map(|(samples, mu)| {
            let mut acc = CMatrix::zeros(m, m);
            for (g, weight) in samples.iter().zip(mu) {
                let b = row_gain(q, g);
                acc += outer(&b, &b).scale(weight * scale);
            }
            acc
        })
        .collect()
}

/// Closed-form colluding `w` step: the generalized eigenvector maximizing
/// `w^H (B1 + τI) w / w^H (A1 + τI) w`, scaled to full power.
pub fn update_w_colluding(
    q: &CVector,
    bank: &SampleBank,
    h_ab: &CMatrix,
    config: &SystemConfig,
) -> Result<Step> {
    let m = h_ab.ncols();
    check_dims(q, &CVector::zeros(m), h_ab, bank)?;
    let scale = config.p_max / config.sigma0_sq;
    let identity = CMatrix::identity(m, m);
    let mut a = identity.clone();
    for e in eve_beam_matrices(q, bank, scale, m) {
        a += e;
    }
    let b = row_gain(q, h_ab);
    let b = outer(&b, &b).scale(scale) + identity;
    let best = generalized_rayleigh_max(&a, &b)?;
    let w = best.vector.scale(config.p_max.sqrt());
    let value = colluding_ratio(&w, q, h_ab, bank, config.sigma0_sq);
    Ok(Step {
        vector: w,
        value,
        report: None,
    })
}

fn phases_from_lifted(lifted: &CMatrix) -> (CVector, bool) {
    let eig = eigh(lifted);
    let n = lifted.nrows();
    let top = eig.max_value();
    let second = if n > 1 {
        eig.values[n - 2].max(0.0)
    } else {
        0.0
    };
    let rank_one = top > 0.0 && second <= RANK_ONE_TOL * top;
    let v = eig.top_vector();
    (project(&v, Recovery::Phases).map(|z| z.conj()), rank_one)
}

struct LiftedOutcome {
    lifted: CMatrix,
    bound: f64,
}

fn finish_q_step(
    q_in: &CVector,
    outcome: std::result::Result<LiftedOutcome, SdpStatus>,
    evaluate: &dyn Fn(&CVector) -> f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Step {
    let input_value = evaluate(q_in);
    let (lifted, bound) = match outcome {
        Ok(o) => (o.lifted, o.bound),
        Err(status) => {
            return Step {
                vector: q_in.clone(),
                value: input_value,
                report: Some(StepReport {
                    kind: StepKind::Q,
                    sdp_status: status,
                    bound: None,
                    candidate: input_value,
                    value: input_value,
                    rank_one: false,
                    kept_input: true,
                }),
            }
        }
    };
    let (mut cand, rank_one) = phases_from_lifted(&lifted);
    let mut cand_value = evaluate(&cand);
    if !rank_one {
        let (v, val) = gaussian_randomize(
            &lifted,
            |v| evaluate(&v.map(|z| z.conj())),
            trials,
            Recovery::Phases,
            rng,
        );
        if val > cand_value {
            cand = v.map(|z| z.conj());
            cand_value = val;
        }
    }
    let kept_input = input_value > cand_value;
    let (vector, value) = if kept_input {
        (q_in.clone(), input_value)
    } else {
        (cand, cand_value)
    };
    Step {
        vector,
        value,
        report: Some(StepReport {
            kind: StepKind::Q,
            sdp_status: SdpStatus::Optimal,
            bound: Some(bound),
            candidate: cand_value,
            value,
            rank_one,
            kept_input,
        }),
    }
}

/// `max tr(A Q2) + ς  s.t.  tr(B Q2) + ς = 1,  [Q2]_nn = ς`, the
/// Charnes-Cooper form of `max (q A q^H + 1) / (q B q^H + 1)` over unit
/// modulus `q`.
fn fractional_phase_problem(a: &CMatrix, b: &CMatrix) -> SdpProblem {
    let n = a.nrows();
    let mut p = SdpProblem::new(n, 1, Sense::Maximize).with_objective(a.clone(), vec![1.0]);
    p.add(b.clone(), vec![1.0], Relation::Eq, 1.0);
    for k in 0..n {
        p.add(selector(n, k), vec![-1.0], Relation::Eq, 0.0);
    }
    p
}

/// Solves the fractional phase SDP and returns `Q1 = Q2 / ς` with the optimal
/// value.
fn fractional_phase_sdr(a: &CMatrix, b: &CMatrix) -> std::result::Result<LiftedOutcome, SdpStatus> {
    let sol = solve(&fractional_phase_problem(a, b)).map_err(|_| SdpStatus::NumericalFailure)?;
    if !sol.is_optimal() {
        return Err(sol.status);
    }
    let varsigma = sol.scalar_values[0];
    if !(varsigma > 0.0) {
        return Err(SdpStatus::NumericalFailure);
    }
    Ok(LiftedOutcome {
        lifted: sol.x.unscale(varsigma),
        bound: sol.objective_value,
    })
}

/// Colluding `q` step via SDR, with rank-one extraction or Gaussian
/// randomization. Never returns a worse `q` than `q_in`.
pub fn update_q_colluding(
    w: &CVector,
    q_in: &CVector,
    bank: &SampleBank,
    h_ab: &CMatrix,
    config: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<Step> {
    check_dims(q_in, w, h_ab, bank)?;
    let n = h_ab.nrows();
    let (a2, eves) = q_step_matrices(w, bank, h_ab, config.sigma0_sq);
    let mut b2 = CMatrix::zeros(n, n);
    for e in eves {
        b2 += e;
    }
    let outcome = fractional_phase_sdr(&a2, &b2);
    let evaluate = |q: &CVector| colluding_ratio(w, q, h_ab, bank, config.sigma0_sq);
    Ok(finish_q_step(
        q_in,
        outcome,
        &evaluate,
        config.rand_trials,
        rng,
    ))
}

/// Phases maximizing `‖q H‖²`: the fractional SDR with no leakage term.
pub fn max_gain_phases(h: &CMatrix, trials: usize, rng: &mut impl Rng) -> CVector {
    let n = h.nrows();
    let energy = h.norm_squared();
    let scale = if energy > 0.0 { n as f64 / energy } else { 1.0 };
    let a = (h * h.adjoint()).scale(scale);
    let ones = CVector::from_element(n, Complex64::new(1.0, 0.0));
    let evaluate = |q: &CVector| row_gain(q, h).norm_squared();
    let outcome = fractional_phase_sdr(&a, &CMatrix::zeros(n, n));
    finish_q_step(&ones, outcome, &evaluate, trials, rng).vector
}

/// Min-max Charnes-Cooper SDP shared by both non-colluding steps:
/// `min r  s.t.  tr(C_k X) + v ≤ r,  tr(A X) + v ≥ 1,  extra(X, v)`.
fn minmax_problem(eves: &[CMatrix], a: &CMatrix, extra: impl Fn(&mut SdpProblem)) -> SdpProblem {
    let n = a.nrows();
    let mut p =
        SdpProblem::new(n, 2, Sense::Minimize).with_objective(CMatrix::zeros(n, n), vec![0.0, 1.0]);
    if eves.is_empty() {
        p.add(CMatrix::zeros(n, n), vec![1.0, -1.0], Relation::Le, 0.0);
    }
    for c in eves {
        p.add(c.clone(), vec![1.0, -1.0], Relation::Le, 0.0);
    }
    p.add(a.clone(), vec![1.0, 0.0], Relation::Ge, 1.0);
    extra(&mut p);
    p
}

fn minmax_sdp(
    eves: &[CMatrix],
    a: &CMatrix,
    extra: impl Fn(&mut SdpProblem),
) -> std::result::Result<(CMatrix, f64, f64), SdpStatus> {
    let sol = solve(&minmax_problem(eves, a, extra)).map_err(|_| SdpStatus::NumericalFailure)?;
    if !sol.is_optimal() {
        return Err(sol.status);
    }
    let (v, r) = (sol.scalar_values[0], sol.scalar_values[1]);
    if !(v > 0.0) || !(r > 0.0) {
        return Err(SdpStatus::NumericalFailure);
    }
    Ok((sol.x, v, r))
}

fn power_budget(m: usize) -> impl Fn(&mut SdpProblem) {
    move |p: &mut SdpProblem| p.add(CMatrix::identity(m, m), vec![-1.0, 0.0], Relation::Le, 0.0)
}

fn unit_modulus(n: usize) -> impl Fn(&mut SdpProblem) {
    move |p: &mut SdpProblem| {
        for k in 0..n {
            p.add(selector(n, k), vec![-1.0, 0.0], Relation::Eq, 0.0);
        }
    }
}

/// Normalized matrices of the `q` step at `w`: Bob's `A2` and one leakage
/// matrix per Eve.
fn q_step_matrices(
    w: &CVector,
    bank: &SampleBank,
    h_ab: &CMatrix,
    sigma0_sq: f64,
) -> (CMatrix, Vec<CMatrix>) {
    let a = column_gain(h_ab, w);
    let a2 = outer(&a, &a).unscale(sigma0_sq);
    (a2, eve_phase_matrices(w, bank, sigma0_sq, h_ab.nrows()))
}

/// Normalized matrices of the `w` step at `q`: Bob's `A3` and one leakage
/// matrix per Eve.
fn w_step_matrices(
    q: &CVector,
    bank: &SampleBank,
    h_ab: &CMatrix,
    config: &SystemConfig,
) -> (CMatrix, Vec<CMatrix>) {
    let scale = config.p_max / config.sigma0_sq;
    let b = row_gain(q, h_ab);
    (
        outer(&b, &b).scale(scale),
        eve_beam_matrices(q, bank, scale, h_ab.ncols()),
    )
}

/// The SDP a `q` step solves at `w`, as handed to the solver.
pub fn q_step_problem(
    mode: Mode,
    w: &CVector,
    bank: &SampleBank,
    h_ab: &CMatrix,
    config: &SystemConfig,
) -> SdpProblem {
    let n = h_ab.nrows();
    let (a2, eves) = q_step_matrices(w, bank, h_ab, config.sigma0_sq);
    match mode {
        Mode::Colluding => {
            let mut b2 = CMatrix::zeros(n, n);
            for e in eves {
                b2 += e;
            }
            fractional_phase_problem(&a2, &b2)
        }
        Mode::NonColluding => minmax_problem(&eves, &a2, unit_modulus(n)),
    }
}

/// The SDP a non-colluding `w` step solves at `q`. The colluding `w` step is
/// closed form and has none.
pub fn w_step_problem(
    q: &CVector,
    bank: &SampleBank,
    h_ab: &CMatrix,
    config: &SystemConfig,
) -> SdpProblem {
    let (a3, eves) = w_step_matrices(q, bank, h_ab, config);
    minmax_problem(&eves, &a3, power_budget(h_ab.ncols()))
}

/// Non-colluding `w` step: SDR of the min-max leakage ratio under the power
/// budget, then rank-one extraction or randomization. Never returns a worse
/// `w` than `w_in`.
pub fn update_w_noncolluding(
    q: &CVector,
    w_in: &CVector,
    bank: &SampleBank,
    h_ab: &CMatrix,
    config: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<Step> {
    check_dims(q, w_in, h_ab, bank)?;
    let m = h_ab.ncols();
    let (a3, eves) = w_step_matrices(q, bank, h_ab, config);
    let evaluate = |w: &CVector| noncolluding_ratio(w, q, h_ab, bank, config.sigma0_sq);
    let input_value = evaluate(w_in);

    let outcome = minmax_sdp(&eves, &a3, power_budget(m));
    let (x, v, r) = match outcome {
        Ok(o) => o,
        Err(status) => {
            return Ok(Step {
                vector: w_in.clone(),
                value: input_value,
                report: Some(StepReport {
                    kind: StepKind::W,
                    sdp_status: status,
                    bound: None,
                    candidate: input_value,
                    value: input_value,
                    rank_one: false,
                    kept_input: true,
                }),
            })
        }
    };
    let cov = x.scale(config.p_max / v);
    let eig = eigh(&cov);
    let top = eig.max_value();
    let second = if m > 1 {
        eig.values[m - 2].max(0.0)
    } else {
        0.0
    };
    let rank_one = top > 0.0 && second <= RANK_ONE_TOL * top;
    let (mut cand, _) = dominant_rank_one(&crate::numerics::symmetrize(&cov))?;
    if cand.norm_squared() > config.p_max {
        cand = project(&cand, Recovery::Power(config.p_max));
    }
    let mut cand_value = evaluate(&cand);
    if !rank_one {
        let (c, val) = gaussian_randomize(
            &cov,
            evaluate,
            config.rand_trials,
            Recovery::Power(config.p_max),
            rng,
        );
        if val > cand_value {
            cand = c;
            cand_value = val;
        }
    }
    let kept_input = input_value > cand_value;
    let (vector, value) = if kept_input {
        (w_in.clone(), input_value)
    } else {
        (cand, cand_value)
    };
    Ok(Step {
        vector,
        value,
        report: Some(StepReport {
            kind: StepKind::W,
            sdp_status: SdpStatus::Optimal,
            bound: Some(1.0 / r),
            candidate: cand_value,
            value,
            rank_one,
            kept_input,
        }),
    })
}

/// Non-colluding `q` step: min-max SDR with `[S]_nn = v'`.
pub fn update_q_noncolluding(
    w: &CVector,
    q_in: &CVector,
    bank: &SampleBank,
    h_ab: &CMatrix,
    config: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<Step> {
    check_dims(q_in, w, h_ab, bank)?;
    let n = h_ab.nrows();
    let (a2, eves) = q_step_matrices(w, bank, h_ab, config.sigma0_sq);
    let outcome = minmax_sdp(&eves, &a2, unit_modulus(n)).map(|(s, v, r)| LiftedOutcome {
        lifted: s.unscale(v),
        bound: 1.0 / r,
    });
    let evaluate = |q: &CVector| noncolluding_ratio(w, q, h_ab, bank, config.sigma0_sq);
    Ok(finish_q_step(
        q_in,
        outcome,
        &evaluate,
        config.rand_trials,
        rng,
    ))
}

/// `sqrt(P) conj(H_AB[0, :]) / ‖H_AB[0, :]‖`.
pub fn initial_w(h_ab: &CMatrix, p_max: f64) -> CVector {
    let m = h_ab.ncols();
    let row = CVector::from_iterator(m, h_ab.row(0).iter().map(|z| z.conj()));
    let norm = row.norm();
    if norm > 0.0 {
        row.scale(p_max.sqrt() / norm)
    } else {
        CVector::from_element(m, Complex64::new((p_max / m as f64).sqrt(), 0.0))
    }
}

/// The two-layer alternating loop on a given sample bank.
pub fn solve_with_bank(
    h_ab: &CMatrix,
    bank: &SampleBank,
    config: &SystemConfig,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<BeamformingSolution> {
    let (n, _) = h_ab.shape();
    let mut w = initial_w(h_ab, config.p_max);
    let mut q = CVector::from_element(n, Complex64::new(1.0, 0.0));
    check_dims(&q, &w, h_ab, bank)?;

    let mut bank = bank.clone();
    let mut inner_history = Vec::new();
    let mut outer_history = Vec::new();
    let mut steps = Vec::new();
    let mut sdp_failures = 0;
    let mut iterations = 0;
    let mut capped = false;
    let mut converged = false;
    // the first iterate has no predecessor to be compared with
    let mut r_in_prev: Option<f64> = None;
    let mut r_out_prev: Option<f64> = None;
    let mut objective = 0.0;

    let record = |step: &Step, steps: &mut Vec<StepReport>, failures: &mut usize| {
        if let Some(r) = &step.report {
            if r.sdp_status != SdpStatus::Optimal {
                *failures += 1;
            }
            steps.push(r.clone());
        }
    };

    for _ in 0..config.outer_cap {
        bank.weights = update_weights(&w, &q, &bank, config.weight_rule);
        let ratio = |w: &CVector, q: &CVector| {
            surrogate_ratio(mode, w, q, h_ab, &bank, config.sigma0_sq).log2()
        };
        let mut round = Vec::new();
        let mut best = ratio(&w, &q);
        let mut inner_done = false;
        for _ in 0..config.inner_cap {
            iterations += 1;
            let (w_new, q_new) = match mode {
                Mode::Colluding => {
                    let ws = update_w_colluding(&q, &bank, h_ab, config)?;
                    let qs = update_q_colluding(&ws.vector, &q, &bank, h_ab, config, rng)?;
                    record(&qs, &mut steps, &mut sdp_failures);
                    (ws.vector, qs.vector)
                }
                Mode::NonColluding => {
                    let ws = update_w_noncolluding(&q, &w, &bank, h_ab, config, rng)?;
                    record(&ws, &mut steps, &mut sdp_failures);
                    let qs = update_q_noncolluding(&ws.vector, &q, &bank, h_ab, config, rng)?;
                    record(&qs, &mut steps, &mut sdp_failures);
                    (ws.vector, qs.vector)
                }
            };
            let value = ratio(&w_new, &q_new);
            if value >= best {
                w = w_new;
                q = q_new;
                best = value;
            }
            round.push(best);
            let done = r_in_prev.is_some_and(|prev| (best - prev).abs() <= config.epsilon);
            r_in_prev = Some(best);
            if done {
                inner_done = true;
                break;
            }
        }
        capped |= !inner_done;
        inner_history.push(round);
        let r_out = ratio(&w, &q);
        outer_history.push(r_out);
        objective = r_out;
        if r_out_prev.is_some_and(|prev| (r_out - prev).abs() <= config.epsilon) {
            converged = true;
            break;
        }
        r_out_prev = Some(r_out);
    }

    Ok(BeamformingSolution {
        w,
        q,
        objective,
        inner_history,
        outer_history,
        status: if converged && !capped {
            SolveStatus::Converged
        } else {
            SolveStatus::IterationCapped
        },
        iterations,
        sdp_failures,
        steps,
        mode,
        weights: bank.weights,
    })
}

/// Robust design against colluding Eves: draws the sample bank from the
/// uncertainty set, then runs the alternating loop.
pub fn solve_colluding(
    channel: &ChannelRealization,
    uncertainty: &UncertaintySet,
    config: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<BeamformingSolution> {
    let bank = build_sample_bank(uncertainty, &channel.h_ar, config, rng);
    solve_with_bank(&channel.h_ab, &bank, config, Mode::Colluding, rng)
}

/// Robust design against non-colluding Eves.
pub fn solve_noncolluding(
    channel: &ChannelRealization,
    uncertainty: &UncertaintySet,
    config: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<BeamformingSolution> {
    let bank = build_sample_bank(uncertainty, &channel.h_ar, config, rng);
    solve_with_bank(&channel.h_ab, &bank, config, Mode::NonColluding, rng)
}

pub fn solve_robust(
    mode: Mode,
    channel: &ChannelRealization,
    uncertainty: &UncertaintySet,
    config: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<BeamformingSolution> {
    match mode {
        Mode::Colluding => solve_colluding(channel, uncertainty, config, rng),
        Mode::NonColluding => solve_noncolluding(channel, uncertainty, config, rng),
    }
}
