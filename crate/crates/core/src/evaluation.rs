//! Achievable and secrecy rates, empirical worst case over the uncertainty
//! box, and the Monte Carlo sweep driver.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{run_scheme, Scheme, SchemeChoice};
use crate::channel::{
    build_uncertainty, cascade, deg, draw_channel, draw_eve_paths, eve_vector, ChannelError,
    ChannelRealization, SampleAmplitude, SystemConfig, UncertaintySet,
};
use crate::numerics::{CMatrix, CVector};
use crate::rsbf::{gain, BeamformingSolution, Mode, SolveStatus};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// `log2(1 + |q H w|² / σ0²)`.
pub fn rate(q: &CVector, h: &CMatrix, w: &CVector, sigma0_sq: f64) -> f64 {
    (gain(q, h, w) / sigma0_sq).ln_1p() / LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub r_b: f64,
    /// `log2(1 + Σ_k SNR_k)`.
    pub r_e_colluding: f64,
    /// `max_k log2(1 + SNR_k)`.
    pub r_e_noncolluding: f64,
    pub r_s_colluding: f64,
    pub r_s_noncolluding: f64,
    pub worst_case_r_s_colluding: f64,
    pub worst_case_r_s_noncolluding: f64,
    pub per_eve_rates: Vec<f64>,
    pub samples_used: usize,
}

impl EvaluationReport {
    pub fn r_e(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Colluding => self.r_e_colluding,
            Mode::NonColluding => self.r_e_noncolluding,
        }
    }

    pub fn r_s(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Colluding => self.r_s_colluding,
            Mode::NonColluding => self.r_s_noncolluding,
        }
    }

    pub fn worst_case(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Colluding => self.worst_case_r_s_colluding,
            Mode::NonColluding => self.worst_case_r_s_noncolluding,
        }
    }
}

/// Rates on one set of Eve cascades. The worst-case fields equal the
/// nominal ones.
pub fn secrecy_rates(
    q: &CVector,
    w: &CVector,
    h_ab: &CMatrix,
    eves: &[CMatrix],
    sigma0_sq: f64,
) -> EvaluationReport {
    let r_b = rate(q, h_ab, w, sigma0_sq);
    let snrs: Vec<f64> = eves.iter().map(|g| gain(q, g, w) / sigma0_sq).collect();
    let per_eve_rates: Vec<f64> = snrs.iter().map(|s| s.ln_1p() / LN_2).collect();
    let r_e_colluding = snrs.iter().sum::<f64>().ln_1p() / LN_2;
    let r_e_noncolluding = per_eve_rates.iter().copied().fold(0.0, f64::max);
    let r_s_colluding = (r_b - r_e_colluding).max(0.0);
    let r_s_noncolluding = (r_b - r_e_noncolluding).max(0.0);
    EvaluationReport {
        r_b,
        r_e_colluding,
        r_e_noncolluding,
        r_s_colluding,
        r_s_noncolluding,
        worst_case_r_s_colluding: r_s_colluding,
        worst_case_r_s_noncolluding: r_s_noncolluding,
        per_eve_rates,
        samples_used: 1,
    }
}

/// Minimum secrecy rate over `eval_samples` joint Eve draws. Draw 0 is the
/// true channel; the rest take angles uniformly from the box and the largest
/// amplitude. Draw `j` of every Eve is taken before draw `j + 1` of any, so a
/// longer run sees a superset of a shorter one's draws.
pub fn worst_case_asr(
    solution: &BeamformingSolution,
    channel: &ChannelRealization,
    uncertainty: &UncertaintySet,
    config: &SystemConfig,
    rng: &mut impl Rng,
) -> EvaluationReport {
    let (q, w) = (&solution.q, &solution.w);
    let mut report = secrecy_rates(q, w, &channel.h_ab, &channel.g_true, config.sigma0_sq);
    let samples = config.eval_samples.max(1);
    for _ in 1..samples {
        let eves: Vec<CMatrix> = uncertainty
            .eves
            .iter()
            .map(|bounds| {
                let draws = draw_eve_paths(bounds, SampleAmplitude::Max, rng);
                cascade(&eve_vector(bounds, &draws, config), &channel.h_ar)
            })
            .collect();
        let draw = secrecy_rates(q, w, &channel.h_ab, &eves, config.sigma0_sq);
        report.worst_case_r_s_colluding = report.worst_case_r_s_colluding.min(draw.r_s_colluding);
        report.worst_case_r_s_noncolluding = report
            .worst_case_r_s_noncolluding
            .min(draw.r_s_noncolluding);
    }
    report.samples_used = samples;
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Angle half-width in degrees.
    DeltaAngle,
    /// Transmit power in watts.
    PMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSpec {
    pub base: SystemConfig,
    /// Angle half-width in degrees, used unless swept.
    pub delta_angle_deg: f64,
    /// Full amplitude interval width in dB.
    pub delta_amp_db: f64,
    pub schemes: Vec<SchemeChoice>,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
}

impl MonteCarloSpec {
    pub fn validate(&self) -> Result<(), EvaluationError> {
        if self.trials == 0 {
            return Err(EvaluationError::NoTrials);
        }
        if self.values.is_empty() {
            return Err(EvaluationError::InvalidSweep("no sweep values".into()));
        }
        if self.values.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(EvaluationError::InvalidSweep(
                "sweep values must be strictly increasing".into(),
            ));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(EvaluationError::InvalidSweep(
                "sweep values must be finite and non-negative".into(),
            ));
        }
        if self.variable == SweepVariable::PMax && self.values.iter().any(|v| *v <= 0.0) {
            return Err(EvaluationError::InvalidSweep(
                "powers must be positive".into(),
            ));
        }
        if self.schemes.is_empty() {
            return Err(EvaluationError::InvalidSweep("no schemes selected".into()));
        }
        self.base.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub sweep_value: f64,
    pub trial: usize,
    pub scheme: String,
    pub worst_case_asr: f64,
    pub nominal_asr: f64,
    pub r_b: f64,
    pub r_e: f64,
    pub iterations: usize,
    pub status: String,
    pub seed: u64,
}

impl TrialRow {
    pub fn failed(&self) -> bool {
        self.status.starts_with("failed")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep_value: f64,
    pub scheme: String,
    pub mean_worst_case_asr: f64,
    pub std_worst_case_asr: f64,
    pub mean_nominal_asr: f64,
    pub mean_r_b: f64,
    pub mean_r_e: f64,
    pub mean_iterations: f64,
    /// Trials that entered the means.
    pub count: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonteCarloTable {
    /// Ordered by sweep value, then trial, then scheme.
    pub rows: Vec<TrialRow>,
    /// Ordered by sweep value, then scheme.
    pub summaries: Vec<SummaryRow>,
}

impl MonteCarloTable {
    pub fn summary(&self, sweep_value: f64, scheme: &str) -> Option<&SummaryRow> {
        self.summaries
            .iter()
            .find(|s| s.sweep_value == sweep_value && s.scheme == scheme)
    }

    pub fn worst_case_samples(&self, sweep_value: f64, scheme: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.sweep_value == sweep_value && r.scheme == scheme && !r.failed())
            .map(|r| r.worst_case_asr)
            .collect()
    }
}

const STREAM_CHANNEL: u64 = 1;
const STREAM_EVAL: u64 = 2;
const STREAM_SOLVER: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for a tuple of counters under a master seed.
pub fn stream_rng(seed: u64, counters: &[u64]) -> ChaCha8Rng {
    let key = counters
        .iter()
        .fold(splitmix(seed), |acc, &c| splitmix(acc ^ splitmix(c)));
    ChaCha8Rng::seed_from_u64(key)
}

/// Channel of one trial; shared by every sweep value and scheme.
pub fn trial_channel(
    config: &SystemConfig,
    trial: usize,
) -> Result<ChannelRealization, ChannelError> {
    draw_channel(
        config,
        &mut stream_rng(config.seed, &[STREAM_CHANNEL, trial as u64]),
    )
}

/// Evaluation draws of one trial; shared by every sweep value and scheme.
pub fn trial_eval_rng(config: &SystemConfig, trial: usize) -> ChaCha8Rng {
    stream_rng(config.seed, &[STREAM_EVAL, trial as u64])
}

pub fn trial_solver_rng(
    config: &SystemConfig,
    trial: usize,
    sweep_value: f64,
    choice: SchemeChoice,
) -> ChaCha8Rng {
    let scheme = choice.scheme as u64 * 2 + choice.mode as u64;
    stream_rng(
        config.seed,
        &[STREAM_SOLVER, trial as u64, sweep_value.to_bits(), scheme],
    )
}

/// Configuration and uncertainty box for one sweep value.
pub fn cell_setup(spec: &MonteCarloSpec, value: f64) -> (SystemConfig, f64) {
    let mut config = spec.base.clone();
    let mut delta = spec.delta_angle_deg;
    match spec.variable {
        SweepVariable::DeltaAngle => delta = value,
        SweepVariable::PMax => config.p_max = value,
    }
    (config, delta)
}

/// Runs one scheme on one trial channel and scores it.
pub fn run_cell(
    spec: &MonteCarloSpec,
    channel: &ChannelRealization,
    value: f64,
    trial: usize,
    choice: SchemeChoice,
) -> TrialRow {
    let (config, delta) = cell_setup(spec, value);
    let set = build_uncertainty(channel, deg(delta), spec.delta_amp_db);
    let mut rng = trial_solver_rng(&spec.base, trial, value, choice);
    let base = TrialRow {
        sweep_value: value,
        trial,
        scheme: choice.to_string(),
        worst_case_asr: f64::NAN,
        nominal_asr: f64::NAN,
        r_b: f64::NAN,
        r_e: f64::NAN,
        iterations: 0,
        status: String::new(),
        seed: spec.base.seed,
    };
    // with perfect CSI there is nothing left to be uncertain about
    let judged = match choice.scheme {
        Scheme::Perfect => build_uncertainty(channel, 0.0, 0.0),
        _ => set.clone(),
    };
    match run_scheme(choice, channel, &set, &config, &mut rng) {
        Ok(sol) => {
            let report = worst_case_asr(
                &sol,
                channel,
                &judged,
                &config,
                &mut trial_eval_rng(&spec.base, trial),
            );
            TrialRow {
                worst_case_asr: report.worst_case(choice.mode),
                nominal_asr: report.r_s(choice.mode),
                r_b: report.r_b,
                r_e: report.r_e(choice.mode),
                iterations: sol.iterations,
                status: match sol.status {
                    SolveStatus::Converged => "converged".into(),
                    SolveStatus::IterationCapped => "iteration_capped".into(),
                },
                ..base
            }
        }
        Err(e) => TrialRow {
            status: format!("failed: {e}"),
            ..base
        },
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(spec: &MonteCarloSpec, rows: &[TrialRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &value in &spec.values {
        for choice in &spec.schemes {
            let name = choice.to_string();
            let cell: Vec<&TrialRow> = rows
                .iter()
                .filter(|r| r.sweep_value == value && r.scheme == name)
                .collect();
            let ok: Vec<&TrialRow> = cell.iter().copied().filter(|r| !r.failed()).collect();
            let pick = |f: fn(&TrialRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (mean_wc, std_wc) = mean_std(&pick(|r| r.worst_case_asr));
            out.push(SummaryRow {
                sweep_value: value,
                scheme: name,
                mean_worst_case_asr: mean_wc,
                std_worst_case_asr: std_wc,
                mean_nominal_asr: mean_std(&pick(|r| r.nominal_asr)).0,
                mean_r_b: mean_std(&pick(|r| r.r_b)).0,
                mean_r_e: mean_std(&pick(|r| r.r_e)).0,
                mean_iterations: mean_std(&pick(|r| r.iterations as f64)).0,
                count: ok.len(),
                failed: cell.len() - ok.len(),
            });
        }
    }
    out
}

/// Every (value, trial, scheme) cell, in parallel on `workers` threads
/// (all cores when `None`). Output order does not depend on scheduling.
pub fn monte_carlo(
    spec: &MonteCarloSpec,
    workers: Option<usize>,
) -> Result<MonteCarloTable, EvaluationError> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| EvaluationError::Pool(e.to_string()))?;
    let rows = pool.install(|| -> Result<Vec<TrialRow>, EvaluationError> {
        let channels: Vec<ChannelRealization> = (0..spec.trials)
            .into_par_iter()
            .map(|t| trial_channel(&spec.base, t))
            .collect::<Result<_, _>>()?;
        let cells: Vec<(f64, usize, SchemeChoice)> = spec
            .values
            .iter()
            .flat_map(|&v| {
                (0..spec.trials).flat_map(move |t| spec.schemes.iter().map(move |&c| (v, t, c)))
            })
            .collect();
        Ok(cells
            .into_par_iter()
            .map(|(v, t, c)| run_cell(spec, &channels[t], v, t, c))
            .collect())
    })?;
    let summaries = summarize(spec, &rows);
    Ok(MonteCarloTable { rows, summaries })
}
