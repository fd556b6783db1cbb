use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rsbf_core::baselines::{run_scheme, Scheme, SchemeChoice};
use rsbf_core::channel::{
    build_sample_bank, build_uncertainty, deg, midpoint_cascades, ChannelRealization, SampleBank,
};
use rsbf_core::evaluation::{
    monte_carlo, trial_channel, trial_eval_rng, trial_solver_rng, worst_case_asr,
};
use rsbf_core::rsbf::{q_step_problem, update_weights, w_step_problem, Mode, SolveStatus};
use rsbf_core::sdp::SdpOptions;

use crate::checks::{Budget, Level, Suite};
use crate::config::ExperimentSpec;
use crate::output::{plot_script, write_csv, SolutionRecord};

/// Command-line overrides shared by `run` and `solve-once`.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub schemes: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub emit_plot_script: bool,
}

pub fn load_spec(config: Option<&Path>, o: &Overrides) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(config)?;
    if let Some(names) = &o.schemes {
        let mode = spec.schemes.first().map_or(Mode::Colluding, |c| c.mode);
        let mut schemes = Vec::new();
        for name in names {
            let choice = SchemeChoice::parse(name, mode).map_err(anyhow::Error::msg)?;
            if !schemes.contains(&choice) {
                schemes.push(choice);
            }
        }
        if schemes.is_empty() {
            bail!("--scheme needs at least one name");
        }
        spec.schemes = schemes;
    }
    if let Some(seed) = o.seed {
        spec.base.seed = seed;
    }
    if let Some(trials) = o.trials {
        if trials == 0 {
            bail!("--trials must be at least 1");
        }
        spec.trials = trials;
    }
    if let Some(out) = &o.out {
        spec.output_path = out.clone();
    }
    spec.emit_plot_script |= o.emit_plot_script;
    Ok(spec)
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Sweep, CSV and optional plot script. Failed cells are reported but do not
/// fail the run.
pub fn run(spec: &ExperimentSpec, workers: Option<usize>, stdout: &mut impl Write) -> Result<()> {
    let table = monte_carlo(&spec.monte_carlo(), workers)?;
    let path = &spec.output_path;
    create_parent(path)?;
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut file = std::io::BufWriter::new(file);
    write_csv(&mut file, spec, &table, &timestamp())?;
    file.flush()?;
    writeln!(
        stdout,
        "wrote {} ({} rows)",
        path.display(),
        table.rows.len() + table.summaries.len()
    )?;
    for s in &table.summaries {
        writeln!(
            stdout,
            "{:>8} {:<22} worst-case ASR {:.6} ± {:.6}  nominal {:.6}  failed {}",
            s.sweep_value,
            s.scheme,
            s.mean_worst_case_asr,
            s.std_worst_case_asr,
            s.mean_nominal_asr,
            s.failed
        )?;
    }
    if spec.emit_plot_script {
        let script_path = plot_path(path);
        let name = path
            .file_name()
            .map_or_else(|| "results.csv".into(), |n| n.to_string_lossy());
        fs::write(&script_path, plot_script(&name, spec))
            .with_context(|| format!("writing {}", script_path.display()))?;
        writeln!(stdout, "wrote {}", script_path.display())?;
    }
    Ok(())
}

pub fn plot_path(csv: &Path) -> PathBuf {
    let stem = csv
        .file_stem()
        .map_or_else(|| "results".into(), |s| s.to_string_lossy());
    csv.with_file_name(format!("{stem}_plot.py"))
}

#[derive(Debug, Clone, Default)]
pub struct SolveOnce {
    pub trial: usize,
    pub channel: Option<PathBuf>,
    pub save_channel: Option<PathBuf>,
    pub dump_sdp: Option<PathBuf>,
}

/// One scheme on one channel: printed rates plus the solution record.
pub fn solve_once(
    spec: &ExperimentSpec,
    opts: &SolveOnce,
    stdout: &mut impl Write,
) -> Result<SolutionRecord> {
    let choice = *spec.schemes.first().context("no scheme selected")?;
    if spec.schemes.len() > 1 {
        bail!(
            "solve-once takes a single scheme, got {}",
            spec.schemes.len()
        );
    }
    let config = &spec.base;
    let channel = match &opts.channel {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let channel = ChannelRealization::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            let (n, m) = channel.h_ab.shape();
            if m != config.m || n != config.n() || channel.g_true.len() != config.k {
                bail!(
                    "{} holds a {n}x{m} channel with {} Eves; the config expects {}x{} with {}",
                    path.display(),
                    channel.g_true.len(),
                    config.n(),
                    config.m,
                    config.k
                );
            }
            channel
        }
        None => trial_channel(config, opts.trial)?,
    };
    if let Some(path) = &opts.save_channel {
        create_parent(path)?;
        fs::write(path, channel.to_json())
            .with_context(|| format!("writing {}", path.display()))?;
    }

    let delta = spec.delta_angle_deg;
    let set = build_uncertainty(&channel, deg(delta), spec.delta_amp_db);
    let judged = match choice.scheme {
        Scheme::Perfect => build_uncertainty(&channel, 0.0, 0.0),
        _ => set.clone(),
    };
    let mut rng = trial_solver_rng(config, opts.trial, delta, choice);
    let bank_rng = rng.clone();
    let start = Instant::now();
    let solution = run_scheme(choice, &channel, &set, config, &mut rng)?;
    let elapsed = start.elapsed();
    let report = worst_case_asr(
        &solution,
        &channel,
        &judged,
        config,
        &mut trial_eval_rng(config, opts.trial),
    );

    let mode = choice.mode;
    writeln!(stdout, "scheme      {choice}")?;
    writeln!(stdout, "R_B         {:.6} bits/s/Hz", report.r_b)?;
    writeln!(stdout, "R_E         {:.6} bits/s/Hz", report.r_e(mode))?;
    writeln!(stdout, "R_s         {:.6} bits/s/Hz", report.r_s(mode))?;
    writeln!(
        stdout,
        "worst R_s   {:.6} bits/s/Hz ({} draws)",
        report.worst_case(mode),
        report.samples_used
    )?;
    writeln!(stdout, "surrogate   {:.6} bits/s/Hz", solution.objective)?;
    let rounds = solution.inner_history.len();
    let status = match solution.status {
        SolveStatus::Converged => "converged",
        SolveStatus::IterationCapped => "iteration_capped",
    };
    writeln!(
        stdout,
        "iterations  {} inner over {rounds} outer ({status})",
        solution.iterations
    )?;
    writeln!(stdout, "wall time   {:.3} s", elapsed.as_secs_f64())?;

    if let Some(dir) = &opts.dump_sdp {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let bank = match choice.scheme {
            Scheme::Robust => build_sample_bank(&set, &channel.h_ar, config, &mut bank_rng.clone()),
            Scheme::Average => SampleBank::single(&midpoint_cascades(&set, &channel.h_ar, config)),
            Scheme::Perfect | Scheme::Mrt => SampleBank::single(&channel.g_true),
        };
        let weights = update_weights(&solution.w, &solution.q, &bank, config.weight_rule);
        let bank = bank.with_weights(weights);
        let mut problems = vec![(
            "q_step.sdp",
            q_step_problem(mode, &solution.w, &bank, &channel.h_ab, config),
        )];
        if mode == Mode::NonColluding {
            problems.push((
                "w_step.sdp",
                w_step_problem(&solution.q, &bank, &channel.h_ab, config),
            ));
        }
        for (name, problem) in problems {
            let path = dir.join(name);
            let mut f = std::io::BufWriter::new(
                fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
            );
            problem.write_dump(&mut f)?;
            f.flush()?;
            writeln!(stdout, "wrote {}", path.display())?;
        }
    }

    Ok(SolutionRecord {
        config_sha256: spec.hash(),
        scheme: choice.to_string(),
        seed: config.seed,
        trial: opts.trial,
        delta_angle_deg: delta,
        delta_amp_db: spec.delta_amp_db,
        sdp_tolerance: SdpOptions::default().tolerance,
        evaluation: report,
        solution,
    })
}

/// Runs the check suite; returns whether every check passed. Verdicts go to
/// `stdout`, timings to `stderr`.
pub fn verify(
    level: Level,
    seed: u64,
    tolerance_scale: f64,
    stdout: &mut impl Write,
    stderr: &mut impl Write,
) -> Result<bool> {
    let mut budget = Budget::new(level, seed);
    budget.tolerance_scale = tolerance_scale;
    let mut suite = Suite::new(budget);
    let outcomes = suite.run_all();
    for o in &outcomes {
        writeln!(stdout, "{o}")?;
    }
    for (name, t) in &suite.timings {
        writeln!(stderr, "{name}: {:.3} s", t.as_secs_f64())?;
    }
    Ok(outcomes.iter().all(|o| o.passed))
}
