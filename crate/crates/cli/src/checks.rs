//! Oracle-equivalence and invariant suites behind `rsbf verify` and the
//! acceptance run.
//!
//! Every check reports a deterministic one-line outcome; wall-clock figures
//! go to the caller through [`Suite::timings`] so that printed verdicts stay
//! byte-reproducible.

use std::fmt;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rsbf_core::channel::{build_uncertainty, deg, SampleBank, SystemConfig};
use rsbf_core::evaluation::{secrecy_rates, stream_rng, trial_channel, worst_case_asr};
use rsbf_core::numerics::{trace_product, CMatrix, CVector};
use rsbf_core::oracle::{self, Aggregate, ToyInstance};
use rsbf_core::rsbf::{
    colluding_ratio, initial_w, noncolluding_ratio, solve_robust, solve_with_bank,
    update_q_colluding, update_w_colluding, update_w_noncolluding, BeamformingSolution, Mode,
    StepKind, StepReport,
};
use rsbf_core::sdp::{solve, Relation, SdpProblem, SdpSolution, SdpStatus, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
    Acceptance,
}

/// Problem counts and sizes for one level.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    pub seed: u64,
    /// Multiplies every tolerance; 1 is nominal.
    pub tolerance_scale: f64,
    pub q_instances: usize,
    pub w_instances: usize,
    pub w_draws: usize,
    pub joint_instances: usize,
    pub joint_levels: usize,
    pub joint_draws: usize,
    pub sdp_problems: usize,
    pub first_order_iterations: usize,
    pub toy_runs: usize,
    pub physical_runs: usize,
    pub random_evaluations: usize,
    /// Runs the M = 16, N = 16 timing check with this per-solve limit.
    pub timing_limit: Option<Duration>,
}

impl Budget {
    pub fn new(level: Level, seed: u64) -> Self {
        let acceptance = Self {
            seed,
            tolerance_scale: 1.0,
            q_instances: 50,
            w_instances: 50,
            w_draws: 100_000,
            joint_instances: 20,
            joint_levels: 64,
            joint_draws: 10_000,
            sdp_problems: 20,
            first_order_iterations: 200_000,
            toy_runs: 40,
            physical_runs: 10,
            random_evaluations: 2_000,
            timing_limit: None,
        };
        match level {
            Level::Acceptance => acceptance,
            Level::Full => Self {
                timing_limit: Some(Duration::from_secs(60)),
                ..acceptance
            },
            Level::Quick => Self {
                seed,
                tolerance_scale: 1.0,
                q_instances: 6,
                w_instances: 6,
                w_draws: 10_000,
                joint_instances: 3,
                joint_levels: 32,
                joint_draws: 2_000,
                sdp_problems: 4,
                first_order_iterations: 200_000,
                toy_runs: 6,
                physical_runs: 2,
                random_evaluations: 200,
                timing_limit: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} [{}] {}: {}", self.id, self.name, self.detail)
    }
}

fn outcome(id: &'static str, name: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome {
        id,
        name,
        passed,
        detail,
    }
}

const TAG_Q: u64 = 101;
const TAG_W: u64 = 102;
const TAG_JOINT: u64 = 103;
const TAG_SDP: u64 = 104;
const TAG_TOY: u64 = 105;
const TAG_EVAL: u64 = 106;
const TAG_PHYSICAL: u64 = 107;

/// Runs the checks in order and keeps what later checks need.
pub struct Suite {
    pub budget: Budget,
    /// Every SDR step report produced so far.
    pub steps: Vec<StepReport>,
    /// Every solver run produced so far.
    pub solutions: Vec<BeamformingSolution>,
    /// Physical-scale runs, by channel index.
    pub physical: Vec<BeamformingSolution>,
    pub timings: Vec<(String, Duration)>,
}

fn toy_config(m: usize, k: usize, d: usize) -> SystemConfig {
    SystemConfig {
        m,
        k,
        d_k: d,
        p_max: 1.0,
        sigma0_sq: 1.0,
        eve_centers: vec![[0.0; 3]; k],
        ..SystemConfig::default()
    }
}

fn bank(inst: &ToyInstance) -> SampleBank {
    SampleBank {
        samples: inst.eves.clone(),
        weights: inst.weights.clone(),
    }
}

fn random_phases(n: usize, rng: &mut impl Rng) -> CVector {
    CVector::from_fn(n, |_, _| {
        Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
    })
}

fn ones(n: usize) -> CVector {
    CVector::from_element(n, Complex64::new(1.0, 0.0))
}

fn objective(
    inst: &ToyInstance,
    weights: &[Vec<f64>],
    q: &CVector,
    w: &CVector,
    agg: Aggregate,
) -> f64 {
    oracle::fractional_objective(
        q.as_slice(),
        w.as_slice(),
        &inst.h_ab,
        &inst.eves,
        weights,
        1.0,
        agg,
    )
}

fn rng(seed: u64, tag: u64, index: usize) -> ChaCha8Rng {
    stream_rng(seed, &[tag, index as u64])
}

impl Suite {
    pub fn new(budget: Budget) -> Self {
        Self {
            budget,
            steps: Vec::new(),
            solutions: Vec::new(),
            physical: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn tol(&self, t: f64) -> f64 {
        t * self.budget.tolerance_scale
    }

    /// Every check available at this budget, in order.
    pub fn run_all(&mut self) -> Vec<Outcome> {
        let mut out = vec![
            self.q_step_vs_grid(),
            self.w_step_vs_random_search(),
            self.joint_vs_brute_force(),
            self.sdp_solver(),
            self.solver_runs(),
            self.sdr_bounds(),
            self.orderings(),
        ];
        if let Some(limit) = self.budget.timing_limit {
            out.push(self.timing(limit));
        }
        out.sort_by_key(|o| o.id);
        out
    }

    /// SDR q-step against exhaustive 16-level phases at M = 2, N = 4.
    pub fn q_step_vs_grid(&mut self) -> Outcome {
        let start = Instant::now();
        let b = self.budget.clone();
        let mut worst = f64::INFINITY;
        let mut failures = 0;
        for i in 0..b.q_instances {
            let mut rng = rng(b.seed, TAG_Q, i);
            let k = 1 + i % 2;
            let inst = oracle::toy_instance(2, 4, k, 2, 0.6, &mut rng);
            let config = toy_config(2, k, 2);
            let w = initial_w(&inst.h_ab, 1.0);
            let step =
                update_q_colluding(&w, &ones(4), &bank(&inst), &inst.h_ab, &config, &mut rng)
                    .expect("toy q-step");
            if let Some(r) = &step.report {
                self.steps.push(r.clone());
            }
            let ours = objective(&inst, &inst.weights, &step.vector, &w, Aggregate::Colluding);
            let (q_grid, grid) = oracle::grid_search_q(
                &w,
                &inst.h_ab,
                &inst.eves,
                &inst.weights,
                1.0,
                16,
                Aggregate::Colluding,
            )
            .expect("grid fits");
            let slack = oracle::quantization_slack(
                &q_grid,
                &w,
                &inst.h_ab,
                &inst.eves,
                &inst.weights,
                1.0,
                16,
                Aggregate::Colluding,
            );
            let margin = ours - (grid - self.tol(1.0) * slack);
            worst = worst.min(margin / grid);
            if margin < 0.0 {
                failures += 1;
            }
        }
        let elapsed = start.elapsed();
        self.timings.push(("q-step vs grid".into(), elapsed));
        let in_time = elapsed < Duration::from_secs(60);
        outcome(
            "1",
            "q-step vs 16-level phase grid",
            failures == 0 && in_time,
            format!(
                "{} of {} instances at or above grid - slack (smallest relative margin {:.3e}){}",
                b.q_instances - failures,
                b.q_instances,
                worst,
                if in_time { "" } else { "; over 60 s" }
            ),
        )
    }

    /// Closed-form w against random search, and the single-Eve SDR w-step
    /// against the closed form.
    pub fn w_step_vs_random_search(&mut self) -> Outcome {
        let b = self.budget.clone();
        let mut beaten = 0;
        let mut mismatched = 0;
        let mut worst_gap: f64 = 0.0;
        for i in 0..b.w_instances {
            let mut rng = rng(b.seed, TAG_W, i);
            let m = 2 + i % 3;
            let n = 3;
            let inst = oracle::toy_instance(m, n, 2, 2, 0.8, &mut rng);
            let config = toy_config(m, 2, 2);
            let q = random_phases(n, &mut rng);
            let step = update_w_colluding(&q, &bank(&inst), &inst.h_ab, &config).expect("w-step");
            let ours = objective(&inst, &inst.weights, &q, &step.vector, Aggregate::Colluding);
            let (_, best) = oracle::random_search_w(
                &q,
                &inst.h_ab,
                &inst.eves,
                &inst.weights,
                1.0,
                1.0,
                b.w_draws,
                Aggregate::Colluding,
                &mut rng,
            );
            if ours < best - self.tol(1e-9) {
                beaten += 1;
            }

            let single = SampleBank {
                samples: inst.eves[..1].to_vec(),
                weights: inst.weights[..1].to_vec(),
            };
            let config1 = toy_config(m, 1, 2);
            let wc = update_w_colluding(&q, &single, &inst.h_ab, &config1).expect("w-step");
            let wn = update_w_noncolluding(
                &q,
                &initial_w(&inst.h_ab, 1.0),
                &single,
                &inst.h_ab,
                &config1,
                &mut rng,
            )
            .expect("w-step");
            if let Some(r) = &wn.report {
                self.steps.push(r.clone());
            }
            let gap = (wc.value - wn.value).abs() / wc.value;
            worst_gap = worst_gap.max(gap);
            if gap > self.tol(1e-3) {
                mismatched += 1;
            }
        }
        outcome(
            "2",
            "w-step vs random search and across modes",
            beaten == 0 && mismatched == 0,
            format!(
                "closed form beaten on {beaten} of {} instances ({} draws each); single-Eve mode gap max {:.2e}, {mismatched} over 1e-3",
                b.w_instances, b.w_draws, worst_gap
            ),
        )
    }

    /// Alternating solver against the joint brute force at M = N = 2.
    pub fn joint_vs_brute_force(&mut self) -> Outcome {
        let b = self.budget.clone();
        let mut gaps = Vec::new();
        for i in 0..b.joint_instances {
            let mut rng = rng(b.seed, TAG_JOINT, i);
            let inst = oracle::toy_instance(2, 2, 1, 2, 0.7, &mut rng);
            let config = toy_config(2, 1, 2);
            let sol = solve_with_bank(&inst.h_ab, &bank(&inst), &config, Mode::Colluding, &mut rng)
                .expect("toy solve");
            let ours = objective(&inst, &sol.weights, &sol.q, &sol.w, Aggregate::Colluding);
            let (_, _, best) = oracle::joint_brute_force(
                &inst.h_ab,
                &inst.eves,
                &sol.weights,
                1.0,
                1.0,
                b.joint_levels,
                b.joint_draws,
                Aggregate::Colluding,
                &mut rng,
            )
            .expect("grid fits");
            gaps.push(1.0 - ours / best);
            self.steps.extend(sol.steps.iter().cloned());
            self.solutions.push(sol);
        }
        let limit = self.tol(0.02);
        let within = gaps.iter().filter(|g| **g <= limit).count();
        let worst = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        outcome(
            "3",
            "joint solver vs brute force",
            within == gaps.len(),
            format!(
                "{within} of {} instances within 2% ({}-level phases x {} draws); largest shortfall {:.2}%",
                gaps.len(),
                b.joint_levels,
                b.joint_draws,
                100.0 * worst
            ),
        )
    }

    /// The two analytic fixtures plus random problems against the
    /// first-order reference.
    pub fn sdp_solver(&mut self) -> Outcome {
        let b = self.budget.clone();
        let kkt = |s: &SdpSolution| {
            s.status == SdpStatus::Optimal
                && s.primal_residual <= self.tol(1e-7)
                && s.dual_residual <= self.tol(1e-7)
                && s.duality_gap <= self.tol(1e-7)
        };
        let unit = |i: usize| {
            let mut e = CMatrix::zeros(2, 2);
            e[(i, i)] = Complex64::new(1.0, 0.0);
            e
        };
        let mut p1 =
            SdpProblem::new(2, 0, Sense::Minimize).with_objective(CMatrix::identity(2, 2), vec![]);
        p1.add(unit(0), vec![], Relation::Eq, 1.0);
        p1.add(unit(1), vec![], Relation::Eq, 1.0);
        let mut c2 = CMatrix::zeros(2, 2);
        c2[(0, 0)] = Complex64::new(1.0, 0.0);
        c2[(1, 1)] = Complex64::new(2.0, 0.0);
        let mut p2 = SdpProblem::new(2, 0, Sense::Minimize).with_objective(c2, vec![]);
        p2.add(CMatrix::identity(2, 2), vec![], Relation::Eq, 1.0);
        let mut fixtures_ok = 0;
        for (p, value) in [(p1, 2.0), (p2, 1.0)] {
            let s = solve(&p).expect("fixture is well formed");
            if kkt(&s) && (s.objective_value - value).abs() <= self.tol(1e-7) {
                fixtures_ok += 1;
            }
        }

        let mut agree = 0;
        let mut worst: f64 = 0.0;
        for i in 0..b.sdp_problems {
            let mut rng = rng(b.seed, TAG_SDP, i);
            let (c, constraints) = random_sdp(4, 1 + i % 4, &mut rng);
            let mut p = SdpProblem::new(4, 0, Sense::Minimize).with_objective(c.clone(), vec![]);
            for (a, rhs) in &constraints {
                p.add(a.clone(), vec![], Relation::Eq, *rhs);
            }
            let s = solve(&p).expect("random problem is well formed");
            let (_, reference) =
                oracle::first_order_sdp(&c, &constraints, b.first_order_iterations, 1e-10);
            let err = (s.objective_value - reference).abs() / (1.0 + reference.abs());
            worst = worst.max(err);
            if s.is_optimal() && err <= self.tol(1e-4) {
                agree += 1;
            }
        }
        outcome(
            "5",
            "SDP solver KKT and first-order agreement",
            fixtures_ok == 2 && agree == b.sdp_problems,
            format!(
                "{fixtures_ok} of 2 fixtures within 1e-7; {agree} of {} random problems within 1e-4 (max relative error {:.2e})",
                b.sdp_problems, worst
            ),
        )
    }

    /// Toy and physical-scale solver runs in both modes: feasibility and
    /// inner-loop monotonicity.
    pub fn solver_runs(&mut self) -> Outcome {
        let b = self.budget.clone();
        for i in 0..b.toy_runs {
            let mut rng = rng(b.seed, TAG_TOY, i);
            let (m, n) = (2 + i % 2, 3 + i % 2);
            let k = 1 + i % 3;
            let inst = oracle::toy_instance(m, n, k, 2, 0.6, &mut rng);
            let config = toy_config(m, k, 2);
            let mode = if i % 2 == 0 {
                Mode::Colluding
            } else {
                Mode::NonColluding
            };
            let sol = solve_with_bank(&inst.h_ab, &bank(&inst), &config, mode, &mut rng)
                .expect("toy solve");
            self.steps.extend(sol.steps.iter().cloned());
            self.solutions.push(sol);
        }
        for i in 0..b.physical_runs {
            let config = physical_config(b.seed);
            let channel = trial_channel(&config, i).expect("default geometry is valid");
            let set = build_uncertainty(&channel, deg(5.0), 0.0);
            let mode = if i % 2 == 0 {
                Mode::Colluding
            } else {
                Mode::NonColluding
            };
            let mut rng = rng(b.seed, TAG_PHYSICAL, i);
            let sol = solve_robust(mode, &channel, &set, &config, &mut rng).expect("robust solve");
            self.steps.extend(sol.steps.iter().cloned());
            self.physical.push(sol.clone());
            self.solutions.push(sol);
        }
        let runs = self.solutions.len();
        let monotone = self
            .solutions
            .iter()
            .filter(|s| {
                s.inner_history
                    .iter()
                    .all(|h| h.windows(2).all(|p| p[1] >= p[0]))
            })
            .count();
        let feasible = self
            .solutions
            .iter()
            // every run here has P_max = 1
            .filter(|s| {
                s.w.norm_squared() <= 1.0 + 1e-9
                    && s.q.iter().all(|z| (z.norm() - 1.0).abs() <= 1e-9)
            })
            .count();
        outcome(
            "6",
            "inner-loop monotonicity",
            monotone == runs && feasible == runs,
            format!("{monotone} of {runs} runs non-decreasing; {feasible} of {runs} feasible"),
        )
    }

    /// SDR bound and rank-one tightness on every step report collected.
    pub fn sdr_bounds(&mut self) -> Outcome {
        let slack = self.tol(1e-6);
        let q_steps: Vec<&StepReport> = self
            .steps
            .iter()
            .filter(|s| s.kind == StepKind::Q)
            .collect();
        let mut bounded = 0;
        let mut violations = 0;
        let mut rank_one = 0;
        let mut loose = 0;
        for s in &q_steps {
            let Some(bound) = s.bound else { continue };
            bounded += 1;
            let scale = bound.abs().max(1.0);
            if bound + slack * scale < s.candidate {
                violations += 1;
            }
            if s.rank_one {
                rank_one += 1;
                if (bound - s.candidate).abs() > slack * scale {
                    loose += 1;
                }
            }
        }
        outcome(
            "4",
            "SDR bound on every q-step",
            violations == 0 && loose == 0 && bounded > 0,
            format!(
                "{bounded} solved q-steps of {}: {violations} bound violations; {rank_one} rank-one, {loose} not tight to 1e-6",
                q_steps.len()
            ),
        )
    }

    /// Exact orderings on random points and on every solver output.
    pub fn orderings(&mut self) -> Outcome {
        let b = self.budget.clone();
        let mut evaluations = 0;
        let mut violations = 0;
        let mut check = |c: f64, i: f64, s: [f64; 2]| {
            evaluations += 1;
            if !(c >= i) || s.iter().any(|v| !(*v >= 0.0)) {
                violations += 1;
            }
        };
        for i in 0..b.random_evaluations {
            let mut rng = rng(b.seed, TAG_EVAL, i);
            let k = 1 + i % 3;
            let inst = oracle::toy_instance(3, 3, k, 2, 0.5 + (i % 4) as f64 * 0.5, &mut rng);
            let q = random_phases(3, &mut rng);
            let w = random_phases(3, &mut rng).unscale(3f64.sqrt());
            let eves: Vec<CMatrix> = inst.eves.iter().map(|s| s[0].clone()).collect();
            let r = secrecy_rates(&q, &w, &inst.h_ab, &eves, 1.0);
            check(
                r.r_e_colluding,
                r.r_e_noncolluding,
                [r.r_s_colluding, r.r_s_noncolluding],
            );
            let bank = bank(&inst);
            let coll = colluding_ratio(&w, &q, &inst.h_ab, &bank, 1.0);
            let nonc = noncolluding_ratio(&w, &q, &inst.h_ab, &bank, 1.0);
            check(nonc, coll, [coll, nonc]);
        }
        for i in 0..b.physical_runs {
            let config = physical_config(b.seed);
            let channel = trial_channel(&config, i).expect("default geometry is valid");
            let set = build_uncertainty(&channel, deg(5.0), 0.0);
            let sol = &self.physical[i];
            let r = worst_case_asr(
                sol,
                &channel,
                &set,
                &config,
                &mut rng(b.seed, TAG_EVAL, usize::MAX - i),
            );
            check(
                r.r_e_colluding,
                r.r_e_noncolluding,
                [r.r_s_colluding, r.r_s_noncolluding],
            );
            check(
                r.r_s(sol.mode),
                r.worst_case(sol.mode),
                [r.worst_case_r_s_colluding, r.worst_case_r_s_noncolluding],
            );
        }
        outcome(
            "7",
            "structural orderings",
            violations == 0,
            format!("{violations} violations in {evaluations} evaluations"),
        )
    }

    /// Wall time of one robust solve per mode at M = 16, N = 16.
    pub fn timing(&mut self, limit: Duration) -> Outcome {
        let config = SystemConfig {
            seed: self.budget.seed,
            ..SystemConfig::default()
        };
        let channel = trial_channel(&config, 0).expect("default geometry is valid");
        let set = build_uncertainty(&channel, deg(5.0), 0.0);
        let mut slow = Vec::new();
        for mode in [Mode::Colluding, Mode::NonColluding] {
            let mut rng = rng(self.budget.seed, TAG_PHYSICAL, 1_000 + mode as usize);
            let start = Instant::now();
            let sol = solve_robust(mode, &channel, &set, &config, &mut rng).expect("robust solve");
            let elapsed = start.elapsed();
            self.timings
                .push((format!("robust {mode:?} M=16 N=16"), elapsed));
            self.steps.extend(sol.steps.iter().cloned());
            if elapsed > limit {
                slow.push(format!("{mode:?}"));
            }
        }
        outcome(
            "T",
            "M=16, N=16 robust solve time",
            slow.is_empty(),
            if slow.is_empty() {
                format!("both modes within {} s", limit.as_secs())
            } else {
                format!("over {} s: {}", limit.as_secs(), slow.join(", "))
            },
        )
    }
}

/// Small array at the default geometry.
fn physical_config(seed: u64) -> SystemConfig {
    SystemConfig {
        m: 4,
        n_az: 2,
        n_el: 2,
        d_k: 4,
        seed,
        ..SystemConfig::default()
    }
}

/// Feasible (`b = A(X0)` for a definite `X0`) and bounded (`C` definite).
fn random_sdp(n: usize, m: usize, rng: &mut impl Rng) -> (CMatrix, Vec<(CMatrix, f64)>) {
    use rand_distr::StandardNormal;
    let mut gaussian = || {
        CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    };
    let g = gaussian();
    let x0 = &g * g.adjoint() + CMatrix::identity(n, n);
    let h = gaussian();
    let c = &h * h.adjoint() + CMatrix::identity(n, n).scale(0.1);
    let constraints = (0..m)
        .map(|_| {
            let a = gaussian();
            let a = (&a + a.adjoint()).scale(0.5);
            let rhs = trace_product(&a, &x0);
            (a, rhs)
        })
        .collect();
    (c, constraints)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes_and_is_reproducible() {
        let run = || {
            let mut suite = Suite::new(Budget::new(Level::Quick, 7));
            suite
                .run_all()
                .iter()
                .map(|o| o.to_string())
                .collect::<Vec<_>>()
        };
        let a = run();
        assert!(a.iter().all(|l| l.starts_with("PASS")), "{a:#?}");
        assert_eq!(a, run());
    }

    #[test]
    fn zero_tolerance_fails() {
        let mut budget = Budget::new(Level::Quick, 7);
        budget.tolerance_scale = 0.0;
        let mut suite = Suite::new(budget);
        assert!(!suite.sdp_solver().passed);
    }
}
