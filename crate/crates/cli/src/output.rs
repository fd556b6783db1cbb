//! Result files: the sweep CSV, its plotting script and solution records.

use std::io::Write;

use rsbf_core::evaluation::{EvaluationReport, MonteCarloTable, SummaryRow, TrialRow};
use rsbf_core::rsbf::BeamformingSolution;
use rsbf_core::sdp::SdpOptions;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentSpec;

pub const CSV_HEADER: [&str; 10] = [
    "sweep_value",
    "trial",
    "scheme",
    "worst_case_asr",
    "nominal_asr",
    "r_b",
    "r_e",
    "iterations",
    "status",
    "seed",
];

/// Marker in the `trial` column of aggregate rows.
pub const SUMMARY_TRIAL: &str = "summary";

fn num(x: f64) -> String {
    format!("{x}")
}

fn summary_status(s: &SummaryRow) -> String {
    format!(
        "std={} count={} failed={}",
        num(s.std_worst_case_asr),
        s.count,
        s.failed
    )
}

/// Writes the table. The first line is a comment carrying `timestamp`; every
/// later byte depends only on the experiment.
pub fn write_csv<W: Write>(
    out: W,
    spec: &ExperimentSpec,
    table: &MonteCarloTable,
    timestamp: &str,
) -> csv::Result<()> {
    let mut out = out;
    writeln!(out, "# rsbf run {timestamp}")?;
    writeln!(
        out,
        "# config_sha256={} sdp_tolerance={} trials={}",
        spec.hash(),
        num(SdpOptions::default().tolerance),
        spec.trials
    )?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for &value in &spec.values {
        for row in table.rows.iter().filter(|r| r.sweep_value == value) {
            w.write_record(trial_record(row))?;
        }
        for s in table.summaries.iter().filter(|s| s.sweep_value == value) {
            w.write_record([
                num(s.sweep_value),
                SUMMARY_TRIAL.to_string(),
                s.scheme.clone(),
                num(s.mean_worst_case_asr),
                num(s.mean_nominal_asr),
                num(s.mean_r_b),
                num(s.mean_r_e),
                num(s.mean_iterations),
                summary_status(s),
                spec.base.seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn trial_record(row: &TrialRow) -> [String; 10] {
    [
        num(row.sweep_value),
        row.trial.to_string(),
        row.scheme.clone(),
        num(row.worst_case_asr),
        num(row.nominal_asr),
        num(row.r_b),
        num(row.r_e),
        row.iterations.to_string(),
        row.status.clone(),
        row.seed.to_string(),
    ]
}

/// Python script that draws mean ± std of the worst-case ASR per scheme.
pub fn plot_script(csv_name: &str, spec: &ExperimentSpec) -> String {
    let xlabel = match spec.variable {
        rsbf_core::evaluation::SweepVariable::DeltaAngle => "Angle error bound (deg)",
        rsbf_core::evaluation::SweepVariable::PMax => "Transmit power (W)",
    };
    let image = std::path::Path::new(csv_name)
        .with_extension("png")
        .to_string_lossy()
        .into_owned();
    format!(
        r##"#!/usr/bin/env python3
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_name:?}
image = sys.argv[2] if len(sys.argv) > 2 else {image:?}

curves = defaultdict(list)
with open(path, newline="") as f:
    rows = csv.DictReader(line for line in f if not line.startswith("#"))
    for row in rows:
        if row["trial"] != "{SUMMARY_TRIAL}":
            continue
        fields = dict(part.split("=") for part in row["status"].split())
        curves[row["scheme"]].append(
            (float(row["sweep_value"]), float(row["worst_case_asr"]), float(fields["std"]))
        )

fig, ax = plt.subplots(figsize=(6, 4))
for scheme, points in sorted(curves.items()):
    points.sort()
    x = [p[0] for p in points]
    mean = [p[1] for p in points]
    std = [p[2] for p in points]
    ax.errorbar(x, mean, yerr=std, marker="o", capsize=3, label=scheme)
ax.set_xlabel("{xlabel}")
ax.set_ylabel("Worst-case ASR (bits/s/Hz)")
ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(image, dpi=150)
"##
    )
}

/// What `solve-once` writes: the solution plus enough context to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub config_sha256: String,
    pub scheme: String,
    pub seed: u64,
    pub trial: usize,
    pub delta_angle_deg: f64,
    pub delta_amp_db: f64,
    pub sdp_tolerance: f64,
    pub evaluation: EvaluationReport,
    pub solution: BeamformingSolution,
}

impl SolutionRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serialization cannot fail")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rsbf_core::baselines::SchemeChoice;
    use rsbf_core::rsbf::Mode;

    fn row(value: f64, trial: usize, wc: f64, status: &str) -> TrialRow {
        TrialRow {
            sweep_value: value,
            trial,
            scheme: "robust-colluding".into(),
            worst_case_asr: wc,
            nominal_asr: wc + 0.5,
            r_b: 2.0,
            r_e: 1.0,
            iterations: 3,
            status: status.into(),
            seed: 1,
        }
    }

    fn spec(values: Vec<f64>, trials: usize) -> ExperimentSpec {
        ExperimentSpec {
            values,
            trials,
            schemes: vec![SchemeChoice::parse("robust", Mode::Colluding).unwrap()],
            ..ExperimentSpec::default()
        }
    }

    fn render(spec: &ExperimentSpec, table: &MonteCarloTable, stamp: &str) -> String {
        let mut buf = Vec::new();
        write_csv(&mut buf, spec, table, stamp).unwrap();
        String::from_utf8(buf).unwrap()
    }

    fn table(spec: &ExperimentSpec) -> MonteCarloTable {
        let mut rows = Vec::new();
        for &v in &spec.values {
            for t in 0..spec.trials {
                let status = if t == 1 { "failed: boom" } else { "converged" };
                rows.push(row(v, t, 0.25 * (t + 1) as f64, status));
            }
        }
        let summaries = rsbf_core::evaluation::summarize(&spec.monte_carlo(), &rows);
        MonteCarloTable { rows, summaries }
    }

    #[test]
    fn layout_and_row_count() {
        let spec = spec(vec![0.0, 5.0], 3);
        let text = render(&spec, &table(&spec), "T");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# rsbf run T");
        assert!(lines[1].starts_with("# config_sha256="));
        assert_eq!(lines[2], CSV_HEADER.join(","));
        let data: Vec<&str> = lines[3..].to_vec();
        assert_eq!(data.len(), 2 * 3 + 2);
        assert_eq!(data[0], "0,0,robust-colluding,0.25,0.75,2,1,3,converged,1");
        assert_eq!(
            data[3],
            "0,summary,robust-colluding,0.5,1,2,1,3,std=0.3535533905932738 count=2 failed=1,1"
        );
        assert!(data[1].contains("failed: boom"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn only_the_timestamp_line_varies() {
        let spec = spec(vec![1.0], 2);
        let t = table(&spec);
        let a = render(&spec, &t, "2020-01-01T00:00:00Z");
        let b = render(&spec, &t, "2030-06-01T12:00:00Z");
        assert_ne!(a, b);
        let tail = |s: &str| s.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert_eq!(tail(&a), tail(&b));
    }

    #[test]
    fn plot_script_reads_the_summary_rows() {
        let script = plot_script("out/fig.csv", &ExperimentSpec::default());
        assert!(script.contains("\"out/fig.csv\""));
        assert!(script.contains("\"out/fig.png\""));
        assert!(script.contains("row[\"trial\"] != \"summary\""));
        assert!(script.contains("Angle error bound"));
    }
}
