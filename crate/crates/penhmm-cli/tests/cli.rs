//! End-to-end tests of the binary: verbs, exit codes, file schemas,
//! determinism, and the manifest round trip.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn penhmm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_penhmm"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = penhmm().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "penhmm {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    penhmm()
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

/// A small, fast configuration: short series, few iterations.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let events = dir.join("events.csv").display().to_string();
    write(
        &path,
        &format!(
            r#"
[data]
events = "{events}"
t_len = 1500
dt = 1.0

[model]
states = 2
transition = "penalized"

[penalty]
family = "ridge"
tau = 0.0024787521766663585
tau_grid_log = [-6.0, 0.0]

[mcmc]
iterations = 600
burn_in = 300
thin = 5
chains = 1
seed = 11

[output]
dir = "{out}"
{extra}
"#,
            out = dir.join("out").display()
        ),
    );
    path
}

fn simulate_config(dir: &Path) -> PathBuf {
    let path = dir.join("sim.toml");
    write(
        &path,
        &format!(
            r#"
[data]
t_len = 1500

[simulate]
t_len = 1500
lambda = [0.01, 0.3]
gamma = [0.01, 0.02]
entrance_rate = 0.002
seed = 5

[mcmc]
seed = 5

[output]
dir = "{out}"
"#,
            out = dir.join("out").display()
        ),
    );
    path
}

/// Strict CSV reader: header plus rectangular numeric rows, '.' decimals.
fn check_strict_csv(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().expect("header");
    let cols = header.split(',').count();
    assert!(cols >= 1, "{path:?}");
    let mut rows = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), cols, "ragged row in {path:?}: {line}");
        let values: Vec<f64> = fields
            .iter()
            .map(|f| {
                assert!(!f.contains(' ') && !f.contains(';'), "bad field {f}");
                f.parse::<f64>().unwrap_or_else(|_| panic!("non-numeric field {f} in {path:?}"))
            })
            .collect();
        rows.push(values);
    }
    rows
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(dir.path());
    run_ok(&["simulate", "--config", cfg.to_str().unwrap()]);
    let first = fs::read(dir.path().join("out/events.csv")).unwrap();
    let first_truth = fs::read(dir.path().join("out/truth_path.csv")).unwrap();
    // Re-run into the same directory; outputs must be byte-identical.
    run_ok(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(first, fs::read(dir.path().join("out/events.csv")).unwrap());
    assert_eq!(
        first_truth,
        fs::read(dir.path().join("out/truth_path.csv")).unwrap()
    );
    assert!(dir.path().join("out/entries.csv").exists());
    assert!(dir.path().join("out/run_manifest.json").exists());
}

#[test]
fn simulate_then_fit_round_trips_events() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = simulate_config(dir.path());
    run_ok(&["simulate", "--config", sim_cfg.to_str().unwrap()]);

    // Feed the simulated events back through a fit.
    fs::copy(dir.path().join("out/events.csv"), dir.path().join("events.csv")).unwrap();
    let n_events = fs::read_to_string(dir.path().join("events.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    let fit_cfg = small_config(dir.path(), "");
    run_ok(&["fit", "--config", fit_cfg.to_str().unwrap()]);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap())
            .unwrap();
    // Binning preserved every simulated event.
    assert_eq!(summary["data"]["total_events"], n_events as u64);
    for key in ["lambda_L", "lambda_H_total", "gamma_LH", "gamma_HL"] {
        assert!(
            summary["params"][key].is_object(),
            "summary missing {key}: {summary}"
        );
        for field in ["mean", "lower", "upper", "ess"] {
            assert!(summary["params"][key][field].is_number());
        }
    }
    assert!(summary["P_hat"].is_array());
    assert!(summary["delta_hat"].is_array() || summary["delta_hat"].is_null());
    assert!(summary["mspe"].is_number());
    assert!(summary["mpe_unsquared"].is_number());
    assert!(summary["switches"]["mean"].is_number());

    // Every CSV output parses strictly; state probability rows sum to 1.
    let draws = check_strict_csv(&dir.path().join("out/draws.csv"));
    assert_eq!(draws.len(), 60); // (600 - 300) / 5
    let probs = check_strict_csv(&dir.path().join("out/state_probs.csv"));
    assert_eq!(probs.len(), 1500);
    for row in &probs {
        let sum: f64 = row[1..].iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "state probs sum {sum}");
    }
    let path_rows = check_strict_csv(&dir.path().join("out/path_mean.csv"));
    assert_eq!(path_rows.len(), 1500);
    for row in &path_rows {
        assert!(row[1] == 1.0 || row[1] == 2.0);
    }
}

#[test]
fn manifest_config_reruns_to_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = simulate_config(dir.path());
    run_ok(&["simulate", "--config", sim_cfg.to_str().unwrap()]);
    fs::copy(dir.path().join("out/events.csv"), dir.path().join("events.csv")).unwrap();

    let fit_cfg = small_config(dir.path(), "");
    run_ok(&["fit", "--config", fit_cfg.to_str().unwrap()]);

    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/run_manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["seed"], 11);
    assert!(manifest["wall_time_s"].is_number());

    // Re-run from the echoed config into a fresh directory.
    let echoed = dir.path().join("echoed.toml");
    write(&echoed, manifest["config"].as_str().unwrap());
    let out2 = dir.path().join("out2");
    run_ok(&[
        "fit",
        "--config",
        echoed.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    for name in ["draws.csv", "state_probs.csv", "summary.json", "path_mean.csv"] {
        let a = fs::read(dir.path().join("out").join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs after manifest re-run");
    }
}

#[test]
fn sweep_emits_table_and_argmin() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = simulate_config(dir.path());
    run_ok(&["simulate", "--config", sim_cfg.to_str().unwrap()]);
    fs::copy(dir.path().join("out/events.csv"), dir.path().join("events.csv")).unwrap();

    let cfg = small_config(dir.path(), "");
    let out = run_ok(&["sweep", "--config", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("argmin tau = "), "{stdout}");

    let sweep = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(
        lines.next().unwrap(),
        "tau,log_tau,mspe,mean_switches,accept_rate"
    );
    assert_eq!(lines.count(), 2);
    check_strict_csv(&dir.path().join("out/sweep.csv"));

    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/run_manifest.json")).unwrap(),
    )
    .unwrap();
    assert!(manifest["argmin_tau"].is_number());
}

#[test]
fn covariate_fit_reports_covariate_params() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = simulate_config(dir.path());
    run_ok(&["simulate", "--config", sim_cfg.to_str().unwrap()]);
    fs::copy(dir.path().join("out/events.csv"), dir.path().join("events.csv")).unwrap();
    fs::copy(dir.path().join("out/entries.csv"), dir.path().join("entries.csv")).unwrap();

    let cfg = dir.path().join("cov.toml");
    write(
        &cfg,
        &format!(
            r#"
[data]
events = "{events}"
entries = "{entries}"
t_len = 1500

[model]
transition = "covariate"

[mcmc]
iterations = 400
burn_in = 200
thin = 5
seed = 2

[output]
dir = "{out}"
"#,
            events = dir.path().join("events.csv").display(),
            entries = dir.path().join("entries.csv").display(),
            out = dir.path().join("out").display()
        ),
    );
    run_ok(&["fit", "--config", cfg.to_str().unwrap()]);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap())
            .unwrap();
    for key in ["mu_LH", "mu_HL", "beta_LH", "beta_HL", "alpha"] {
        assert!(
            summary["params"][key].is_object(),
            "summary missing {key}"
        );
    }
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();

    // 2: missing config file.
    assert_eq!(exit_code(&["fit", "--config", "/nonexistent.toml"]), 2);

    // 2: unknown config key.
    let bad = dir.path().join("bad.toml");
    write(&bad, "[mcmc]\niterationz = 10\n");
    assert_eq!(exit_code(&["fit", "--config", bad.to_str().unwrap()]), 2);

    // 2: fit without a data file configured.
    let no_data = dir.path().join("nodata.toml");
    write(&no_data, "[mcmc]\niterations = 10\nburn_in = 5\n");
    assert_eq!(exit_code(&["fit", "--config", no_data.to_str().unwrap()]), 2);

    // 3: events file missing on disk.
    let missing = dir.path().join("missing.toml");
    write(
        &missing,
        "[data]\nevents = \"/no/such/file.csv\"\nt_len = 100\n",
    );
    assert_eq!(exit_code(&["fit", "--config", missing.to_str().unwrap()]), 3);

    // 3: malformed event row.
    write(&dir.path().join("events.csv"), "start_s\n5\nbogus\n");
    let cfg = small_config(dir.path(), "");
    assert_eq!(exit_code(&["fit", "--config", cfg.to_str().unwrap()]), 3);

    // 3: out-of-range event.
    write(&dir.path().join("events.csv"), "start_s\n99999\n");
    assert_eq!(exit_code(&["fit", "--config", cfg.to_str().unwrap()]), 3);
}

#[test]
fn oracle_check_passes() {
    let out = run_ok(&["oracle-check", "--seed", "3"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("all checks passed"), "{stdout}");
    assert!(stdout.matches(": ok (").count() >= 5, "{stdout}");
}
