use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rsbf_cli::commands::{load_spec, Overrides};
use rsbf_cli::config::ExperimentSpec;
use rsbf_cli::output::{SolutionRecord, CSV_HEADER};
use rsbf_core::evaluation::SweepVariable;

const SMALL: &str =
    "[system]\nm = 4\nn_az = 2\nn_el = 2\n\n[solver]\nsamples_per_eve = 4\neval_samples = 20\n";

fn rsbf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsbf"))
        .args(args)
        .current_dir(dir)
        .env_remove("RSBF_CONFIG")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    assert_eq!(reader.headers().unwrap(), CSV_HEADER.as_slice());
    reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn single_trial_single_value_gives_one_row_and_one_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "exp.toml",
        "[experiment]\ntrials = 1\n\n[experiment.sweep]\nvariable = \"delta_angle\"\nvalues = [5.0]\n",
    );
    let out = rsbf(dir.path(), &["run", "--config", &config, "--out", "r.csv"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = data_rows(&dir.path().join("r.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "5");
    assert_eq!(rows[0][1], "0");
    assert_eq!(rows[0][2], "robust-colluding");
    assert_eq!(rows[1][1], "summary");
    assert_eq!(rows[0][3], rows[1][3]);
    let worst: f64 = rows[0][3].parse().unwrap();
    let nominal: f64 = rows[0][4].parse().unwrap();
    assert!(worst >= 0.0 && worst <= nominal);
}

#[test]
fn row_count_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "exp.toml",
        &format!("{SMALL}\n[experiment.sweep]\nvariable = \"p_max\"\nvalues = [0.5, 1.0, 2.0]\n"),
    );
    let out = rsbf(
        dir.path(),
        &[
            "run",
            "--config",
            &config,
            "--trials",
            "4",
            "--scheme",
            "mrt",
            "--seed",
            "5",
            "--workers",
            "2",
            "--out",
            "sub/r.csv",
            "--emit-plot-script",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = data_rows(&dir.path().join("sub/r.csv"));
    assert_eq!(rows.len(), 3 * 4 + 3);
    assert!(rows.iter().all(|r| r[2] == "mrt-colluding" && r[9] == "5"));
    let script = dir.path().join("sub/r_plot.py");
    assert!(script.exists());

    let has_matplotlib = Command::new("python3")
        .args(["-c", "import matplotlib"])
        .output()
        .is_ok_and(|o| o.status.success());
    if has_matplotlib {
        let plot = Command::new("python3")
            .arg(&script)
            .arg(dir.path().join("sub/r.csv"))
            .arg(dir.path().join("fig.png"))
            .output()
            .unwrap();
        assert!(
            plot.status.success(),
            "{}",
            String::from_utf8_lossy(&plot.stderr)
        );
        assert!(dir.path().join("fig.png").exists());
    }
}

#[test]
fn environment_variable_supplies_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "exp.toml",
        &format!("{SMALL}\n[experiment]\ntrials = 2\nscheme = \"mrt\"\nout = \"env.csv\"\n\n[experiment.sweep]\nvariable = \"delta_angle\"\nvalues = [1.0]\n"),
    );
    let out = Command::new(env!("CARGO_BIN_EXE_rsbf"))
        .arg("run")
        .current_dir(dir.path())
        .env("RSBF_CONFIG", &config)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(data_rows(&dir.path().join("env.csv")).len(), 3);
}

#[test]
fn invalid_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "bad.toml",
        "[system]\nm = 4\n\n[experiment]\ntrials = 0\n",
    );
    let out = rsbf(dir.path(), &["run", "--config", &config]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:5"), "{err}");
    assert!(!dir.path().join("results.csv").exists());

    let config = write(dir.path(), "typo.toml", "[system]\nmm = 4\n");
    let out = rsbf(dir.path(), &["run", "--config", &config]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo.toml:2"));
}

#[test]
fn shipped_recipes_parse() {
    let angles = ExperimentSpec::load(Some(&repo_config("angle_sweep.toml"))).unwrap();
    assert_eq!(angles.variable, SweepVariable::DeltaAngle);
    assert_eq!(angles.values, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
    assert_eq!(angles.base.p_max, 1.0);
    assert_eq!(angles.schemes.len(), 4);
    assert_eq!(angles.trials, 100);

    let powers = ExperimentSpec::load(Some(&repo_config("power_sweep.toml"))).unwrap();
    assert_eq!(powers.variable, SweepVariable::PMax);
    assert_eq!(powers.values, vec![0.25, 0.5, 1.0, 1.5, 2.0]);
    assert_eq!(powers.delta_angle_deg, 5.0);

    ExperimentSpec::load(Some(&repo_config("small.toml"))).unwrap();
}

#[test]
fn solve_once_smoke_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "exp.toml", SMALL);
    for scheme in ["robust", "mrt", "robust-noncolluding"] {
        let out = rsbf(
            dir.path(),
            &[
                "solve-once",
                "--config",
                &config,
                "--scheme",
                scheme,
                "--trial",
                "2",
                "--out",
                "sol.json",
                "--save-channel",
                "ch.json",
                "--dump-sdp",
                "dump",
            ],
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let text = String::from_utf8_lossy(&out.stdout);
        for key in ["R_B", "R_E", "R_s", "iterations", "wall time"] {
            assert!(text.contains(key), "{key} missing in {text}");
        }
        let record = SolutionRecord::from_json(
            &std::fs::read_to_string(dir.path().join("sol.json")).unwrap(),
        )
        .unwrap();
        let overrides = Overrides {
            schemes: Some(vec![scheme.to_string()]),
            ..Overrides::default()
        };
        let spec = load_spec(Some(Path::new(&config)), &overrides).unwrap();
        assert_eq!(record.config_sha256, spec.hash());
        assert_eq!(record.solution.w.len(), 4);
        assert_eq!(record.solution.q.len(), 4);
        assert!(record.evaluation.r_b >= 0.0);
        assert!(dir.path().join("dump/q_step.sdp").exists());

        let replay = rsbf(
            dir.path(),
            &[
                "solve-once",
                "--config",
                &config,
                "--scheme",
                scheme,
                "--trial",
                "2",
                "--channel",
                "ch.json",
                "--out",
                "replay.json",
            ],
        );
        assert!(replay.status.success());
        let again = SolutionRecord::from_json(
            &std::fs::read_to_string(dir.path().join("replay.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(again, record);
    }
    assert!(dir.path().join("dump/w_step.sdp").exists());
}

#[test]
fn replayed_channel_must_match_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "exp.toml", SMALL);
    let out = rsbf(
        dir.path(),
        &[
            "solve-once",
            "--config",
            &config,
            "--scheme",
            "mrt",
            "--save-channel",
            "ch.json",
        ],
    );
    assert!(out.status.success());
    let out = rsbf(
        dir.path(),
        &["solve-once", "--scheme", "mrt", "--channel", "ch.json"],
    );
    assert!(!out.status.success());
}

#[test]
fn verify_quick_passes_and_tampered_tolerance_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok = rsbf(dir.path(), &["verify", "quick", "--seed", "2"]);
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stdout)
    );
    let lines = String::from_utf8_lossy(&ok.stdout).lines().count();
    assert_eq!(lines, 7);

    let again = rsbf(dir.path(), &["verify", "quick", "--seed", "2"]);
    assert_eq!(ok.stdout, again.stdout);

    let tampered = rsbf(
        dir.path(),
        &["verify", "quick", "--seed", "2", "--tolerance-scale", "0"],
    );
    assert_eq!(tampered.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&tampered.stdout).contains("FAIL"));
}
