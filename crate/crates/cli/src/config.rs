//! Experiment files.
//!
//! Every key is optional; a missing file section or key keeps the built-in
//! default, so an empty file describes the reference deployment. Angles are in
//! degrees and powers in watts.

use std::fmt;
use std::path::{Path, PathBuf};

use rsbf_core::baselines::SchemeChoice;
use rsbf_core::channel::{SampleAmplitude, SystemConfig, WeightRule};
use rsbf_core::evaluation::{MonteCarloSpec, SweepVariable};
use rsbf_core::rsbf::Mode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// A problem in a config file, anchored to a line when one can be found.
#[derive(Debug, Error, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
            if let Some(col) = self.column {
                write!(f, ":{col}")?;
            }
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    system: SystemSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    uncertainty: UncertaintySection,
    #[serde(default)]
    experiment: ExperimentSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    m: Option<usize>,
    n_az: Option<usize>,
    n_el: Option<usize>,
    k: Option<usize>,
    /// Paths per link.
    paths: Option<usize>,
    p_max: Option<f64>,
    noise_power: Option<f64>,
    path_loss_ref_db: Option<f64>,
    los_exponent: Option<f64>,
    nlos_exponent: Option<f64>,
    carrier_hz: Option<f64>,
    /// Element spacing in wavelengths.
    spacing: Option<f64>,
    alice: Option<[f64; 3]>,
    irs: Option<[f64; 3]>,
    bob: Option<[f64; 3]>,
    eves: Option<Vec<[f64; 3]>>,
    eve_region_radius: Option<f64>,
    nlos_spread_deg: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    epsilon: Option<f64>,
    samples_per_eve: Option<usize>,
    randomization_trials: Option<usize>,
    eval_samples: Option<usize>,
    inner_cap: Option<usize>,
    outer_cap: Option<usize>,
    sample_amplitude: Option<SampleAmplitude>,
    weight_rule: Option<WeightRule>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct UncertaintySection {
    delta_angle_deg: Option<f64>,
    delta_amp_db: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SchemeList {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    scheme: Option<SchemeList>,
    mode: Option<Mode>,
    seed: Option<u64>,
    trials: Option<usize>,
    out: Option<PathBuf>,
    emit_plot_script: Option<bool>,
    sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    variable: SweepVariable,
    values: Vec<f64>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub schemes: Vec<SchemeChoice>,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub delta_angle_deg: f64,
    pub delta_amp_db: f64,
    #[serde(skip)]
    pub output_path: PathBuf,
    #[serde(skip)]
    pub emit_plot_script: bool,
}

pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_DELTA_ANGLE_DEG: f64 = 5.0;
pub const DEFAULT_SWEEP: [f64; 6] = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0];

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            base: SystemConfig::default(),
            schemes: vec![SchemeChoice::parse("robust", Mode::Colluding).unwrap()],
            variable: SweepVariable::DeltaAngle,
            values: DEFAULT_SWEEP.to_vec(),
            trials: DEFAULT_TRIALS,
            delta_angle_deg: DEFAULT_DELTA_ANGLE_DEG,
            delta_amp_db: 0.0,
            output_path: PathBuf::from("results.csv"),
            emit_plot_script: false,
        }
    }
}

impl ExperimentSpec {
    pub fn monte_carlo(&self) -> MonteCarloSpec {
        MonteCarloSpec {
            base: self.base.clone(),
            delta_angle_deg: self.delta_angle_deg,
            delta_amp_db: self.delta_amp_db,
            schemes: self.schemes.clone(),
            variable: self.variable,
            values: self.values.clone(),
            trials: self.trials,
        }
    }

    /// SHA-256 of the resolved experiment, independent of the file layout and
    /// of where results go.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("spec serialization cannot fail");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }

    /// Loads `path`, or the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError {
                    path: p.to_path_buf(),
                    line: None,
                    column: None,
                    message: e.to_string(),
                })?;
                Self::parse(&text, p)
            }
        }
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let file: FileConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            ConfigError {
                path: path.to_path_buf(),
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?;
        resolve(file).map_err(|(section, key, message)| ConfigError {
            path: path.to_path_buf(),
            line: locate(text, section, key),
            column: None,
            message: format!("{section}.{key}: {message}"),
        })
    }
}

type Invalid = (&'static str, &'static str, String);

fn resolve(file: FileConfig) -> Result<ExperimentSpec, Invalid> {
    let defaults = ExperimentSpec::default();
    let mut c = defaults.base.clone();
    let s = file.system;
    let bad = |section, key, msg: &str| Err((section, key, msg.to_string()));

    macro_rules! take {
        ($src:expr, $dst:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    take!(s.m, c.m);
    take!(s.n_az, c.n_az);
    take!(s.n_el, c.n_el);
    take!(s.paths, c.l);
    take!(s.p_max, c.p_max);
    take!(s.noise_power, c.sigma0_sq);
    take!(s.path_loss_ref_db, c.varsigma0_db);
    take!(s.los_exponent, c.c_los);
    take!(s.nlos_exponent, c.c_nlos);
    take!(s.alice, c.alice);
    take!(s.irs, c.irs);
    take!(s.bob, c.bob);
    take!(s.eve_region_radius, c.eve_region_radius);
    if let Some(f) = s.carrier_hz {
        if !(f > 0.0) {
            return bad("system", "carrier_hz", "must be positive");
        }
        c.lambda = 299_792_458.0 / f;
    }
    let spacing = s.spacing.unwrap_or(0.5);
    if !(spacing > 0.0 && spacing <= 0.5) {
        return bad("system", "spacing", "must lie in (0, 0.5] wavelengths");
    }
    c.d0 = c.lambda * spacing;
    if let Some(d) = s.nlos_spread_deg {
        c.nlos_spread = d.to_radians();
    }
    let eves_given = s.eves.is_some();
    if let Some(eves) = s.eves {
        if s.k.is_none() {
            c.k = eves.len();
        }
        c.eve_centers = eves;
    }
    if let Some(k) = s.k {
        c.k = k;
    }

    let checks: [(bool, &'static str, &str); 9] = [
        (c.m >= 1, "m", "must be at least 1"),
        (c.n_az >= 1, "n_az", "must be at least 1"),
        (c.n_el >= 1, "n_el", "must be at least 1"),
        (c.l >= 1, "paths", "must be at least 1"),
        (c.p_max > 0.0, "p_max", "must be positive"),
        (c.sigma0_sq > 0.0, "noise_power", "must be positive"),
        (
            c.eve_region_radius >= 0.0,
            "eve_region_radius",
            "must be nonnegative",
        ),
        (
            c.nlos_spread >= 0.0,
            "nlos_spread_deg",
            "must be nonnegative",
        ),
        (
            c.eve_centers.len() == c.k,
            "eves",
            "needs one position per eavesdropper (k)",
        ),
    ];
    for (ok, key, msg) in checks {
        if !ok {
            let key = if key == "eves" && s.k.is_some() && !eves_given {
                "k"
            } else {
                key
            };
            return Err(("system", key, msg.to_string()));
        }
    }

    let v = file.solver;
    take!(v.epsilon, c.epsilon);
    take!(v.samples_per_eve, c.d_k);
    take!(v.randomization_trials, c.rand_trials);
    take!(v.eval_samples, c.eval_samples);
    take!(v.inner_cap, c.inner_cap);
    take!(v.outer_cap, c.outer_cap);
    take!(v.sample_amplitude, c.sample_amplitude);
    take!(v.weight_rule, c.weight_rule);
    let checks: [(bool, &'static str, &str); 6] = [
        (c.epsilon > 0.0, "epsilon", "must be positive"),
        (c.d_k >= 1, "samples_per_eve", "must be at least 1"),
        (
            c.rand_trials >= 1,
            "randomization_trials",
            "must be at least 1",
        ),
        (c.eval_samples >= 1, "eval_samples", "must be at least 1"),
        (c.inner_cap >= 1, "inner_cap", "must be at least 1"),
        (c.outer_cap >= 1, "outer_cap", "must be at least 1"),
    ];
    for (ok, key, msg) in checks {
        if !ok {
            return Err(("solver", key, msg.to_string()));
        }
    }

    let u = file.uncertainty;
    let delta_angle_deg = u.delta_angle_deg.unwrap_or(defaults.delta_angle_deg);
    let delta_amp_db = u.delta_amp_db.unwrap_or(defaults.delta_amp_db);
    if !(delta_angle_deg.is_finite() && delta_angle_deg >= 0.0) {
        return bad("uncertainty", "delta_angle_deg", "must be nonnegative");
    }
    if !delta_amp_db.is_finite() {
        return bad("uncertainty", "delta_amp_db", "must be finite");
    }

    let e = file.experiment;
    let mode = e.mode.unwrap_or(Mode::Colluding);
    let names = match e.scheme {
        None => vec!["robust".to_string()],
        Some(SchemeList::One(s)) => vec![s],
        Some(SchemeList::Many(v)) => v,
    };
    if names.is_empty() {
        return bad("experiment", "scheme", "at least one scheme is required");
    }
    let mut schemes = Vec::new();
    for name in &names {
        let choice = SchemeChoice::parse(name, mode).map_err(|m| ("experiment", "scheme", m))?;
        if schemes.contains(&choice) {
            return Err(("experiment", "scheme", format!("{choice} listed twice")));
        }
        schemes.push(choice);
    }
    if let Some(seed) = e.seed {
        c.seed = seed;
    }
    let trials = e.trials.unwrap_or(defaults.trials);
    if trials == 0 {
        return bad("experiment", "trials", "must be at least 1");
    }
    let (variable, values) = match e.sweep {
        Some(sw) => (sw.variable, sw.values),
        None => (defaults.variable, defaults.values.clone()),
    };
    if values.is_empty() {
        return bad("experiment", "values", "sweep needs at least one value");
    }
    if values.windows(2).any(|p| !(p[1] > p[0])) {
        return bad(
            "experiment",
            "values",
            "sweep values must be strictly increasing",
        );
    }
    match variable {
        SweepVariable::DeltaAngle if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) => {
            return bad("experiment", "values", "angle bounds must be nonnegative");
        }
        SweepVariable::PMax if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) => {
            return bad("experiment", "values", "powers must be positive");
        }
        _ => {}
    }

    let spec = ExperimentSpec {
        base: c,
        schemes,
        variable,
        values,
        trials,
        delta_angle_deg,
        delta_amp_db,
        output_path: e.out.unwrap_or(defaults.output_path),
        emit_plot_script: e.emit_plot_script.unwrap_or(false),
    };
    spec.base
        .validate()
        .map_err(|err| ("system", "m", err.to_string()))?;
    Ok(spec)
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Line of `key` inside `[section]` (or a dotted sub-table of it).
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = name.trim().to_string();
            if current == section {
                section_line = Some(i + 1);
            }
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if in_section {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    section_line
}
