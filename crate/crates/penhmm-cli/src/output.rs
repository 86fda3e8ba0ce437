//! Output emission: plot-ready CSVs and a JSON summary per fit, the sweep
//! table, simulated datasets, and the run manifest. All files are written
//! atomically (temp file + rename) and numbers use the plain `.`-decimal
//! Rust formatting, so every CSV parses under a strict reader.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use penhmm::chain::{ptm_from_rates, stationary_distribution};
use penhmm::selection::{prediction_error, PredictionError};
use penhmm::{
    CountSeries, ParamSummary, PosteriorSample, ProbabilityRows, SwitchRates, TransitionParams,
};

use crate::config::Config;
use crate::CliError;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".into(),
    });
    fs::write(&tmp, bytes).map_err(|e| CliError::Data(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// State letter labels: L/H for two states, L/M/H for three.
pub fn state_letters(n: usize) -> Vec<&'static str> {
    match n {
        2 => vec!["L", "H"],
        3 => vec!["L", "M", "H"],
        _ => unreachable!("CLI restricts states to 2 or 3"),
    }
}

/// Translate a library parameter name (lambda_1, p_12, gamma_21, mu_12,
/// beta_12, alpha) into the reporting name (lambda_L, p_LH, gamma_HL, ...).
pub fn display_name(raw: &str, n: usize) -> String {
    let letters = state_letters(n);
    let letter = |d: u8| letters[(d - b'1') as usize];
    if let Some(idx) = raw.strip_prefix("lambda_") {
        let k = idx.as_bytes()[0];
        return if k == b'1' {
            format!("lambda_{}", letter(k))
        } else {
            format!("lambda_{}_total", letter(k))
        };
    }
    for prefix in ["p_", "gamma_", "mu_", "beta_"] {
        if let Some(ij) = raw.strip_prefix(prefix) {
            if ij.len() == 2 {
                let b = ij.as_bytes();
                return format!("{prefix}{}{}", letter(b[0]), letter(b[1]));
            }
        }
    }
    raw.to_string()
}

/// Posterior-mean transition matrix: means of the rows for the standard
/// model, the kernel of the posterior-mean rates for the penalized model,
/// and the baseline (no recent entrance) kernel of the posterior-mean mu for
/// the covariate model.
fn posterior_mean_matrix(sample: &PosteriorSample, dt: f64) -> Option<ProbabilityRows> {
    let n = sample.n_states;
    let first = sample.draws.first()?;
    match &first.transitions {
        TransitionParams::Probabilities(_) => {
            let mut acc = vec![0.0; n * n];
            for d in &sample.draws {
                if let TransitionParams::Probabilities(p) = &d.transitions {
                    for (a, &v) in acc.iter_mut().zip(p.as_flat()) {
                        *a += v;
                    }
                }
            }
            for a in acc.iter_mut() {
                *a /= sample.draws.len() as f64;
            }
            ProbabilityRows::normalized(n, acc).ok()
        }
        TransitionParams::Rates(_) => {
            let mut mean = SwitchRates::zeros(n);
            for d in &sample.draws {
                if let TransitionParams::Rates(g) = &d.transitions {
                    for (i, j, v) in g.off_diagonal() {
                        mean.set(i, j, mean.get(i, j) + v);
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        mean.set(i, j, mean.get(i, j) / sample.draws.len() as f64);
                    }
                }
            }
            ptm_from_rates(&mean, dt).ok()
        }
        TransitionParams::Covariate(_) => {
            // Baseline rates exp(mean mu): the f(w) -> 0 limit.
            let mut mean_mu = vec![0.0; n * n];
            for d in &sample.draws {
                if let TransitionParams::Covariate(c) = &d.transitions {
                    for (m, &v) in mean_mu.iter_mut().zip(&c.mu) {
                        *m += v;
                    }
                }
            }
            let mut rates = SwitchRates::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        rates.set(i, j, (mean_mu[i * n + j] / sample.draws.len() as f64).exp());
                    }
                }
            }
            ptm_from_rates(&rates, dt).ok()
        }
    }
}

fn summary_json(
    sample: &PosteriorSample,
    data: &CountSeries,
    cfg: &Config,
    errors: &PredictionError,
) -> serde_json::Value {
    let n = sample.n_states;
    let params: BTreeMap<String, &ParamSummary> = sample
        .summaries
        .iter()
        .map(|(k, v)| (display_name(k, n), v))
        .collect();

    let p_hat = posterior_mean_matrix(sample, data.dt);
    let delta_hat = p_hat.as_ref().and_then(|p| stationary_distribution(p).ok());
    let p_hat_rows: Option<Vec<Vec<f64>>> =
        p_hat.map(|p| (0..n).map(|i| p.row(i).to_vec()).collect());

    let mut switch_draws: Vec<f64> = sample
        .draws
        .iter()
        .map(|d| d.switch_count() as f64)
        .collect();
    switch_draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let switches = json!({
        "mean": sample.mean_switches(),
        "lower": penhmm::stats::quantile(&switch_draws, 0.025),
        "upper": penhmm::stats::quantile(&switch_draws, 0.975),
    });

    json!({
        "model": {
            "states": n,
            "transition": cfg.model.transition,
            "family": cfg.penalty.family,
            "tau": cfg.penalty.tau,
        },
        "data": {
            "t_len": data.t_len(),
            "dt": data.dt,
            "total_events": data.total_events(),
            "entrances": data.entrance_times.as_ref().map(|e| e.len()),
        },
        "mcmc": {
            "iterations": cfg.mcmc.iterations,
            "burn_in": cfg.burn_in(),
            "thin": cfg.mcmc.thin,
            "chains": cfg.mcmc.chains,
            "seed": cfg.mcmc.seed,
            "retained_draws": sample.draws.len(),
            "accept_rate": sample.accept_rate,
        },
        "params": params,
        "P_hat": p_hat_rows,
        "delta_hat": delta_hat,
        "switches": switches,
        "mspe": errors.mspe,
        "mpe_unsquared": errors.mean_error,
    })
}

/// Write the per-fit outputs: draws.csv, state_probs.csv, summary.json,
/// path_mean.csv. Returns the file names written.
pub fn emit_outputs(
    sample: &PosteriorSample,
    data: &CountSeries,
    cfg: &Config,
    dir: &Path,
) -> Result<Vec<String>, CliError> {
    if sample.draws.is_empty() {
        return Err(CliError::Config("no retained draws to emit".into()));
    }
    let n = sample.n_states;
    let letters = state_letters(n);

    // draws.csv
    let names: Vec<String> = PosteriorSample::scalar_params(&sample.draws[0])
        .iter()
        .map(|(k, _)| k.clone())
        .collect();
    let mut draws_csv = String::from("draw,iteration");
    for name in &names {
        draws_csv.push(',');
        draws_csv.push_str(&display_name(name, n));
    }
    draws_csv.push_str(",switches\n");
    for (idx, draw) in sample.draws.iter().enumerate() {
        draws_csv.push_str(&format!("{},{}", idx + 1, sample.iterations[idx]));
        for (_, value) in PosteriorSample::scalar_params(draw) {
            draws_csv.push_str(&format!(",{value}"));
        }
        draws_csv.push_str(&format!(",{}\n", draw.switch_count()));
    }

    // state_probs.csv
    let mut probs_csv = String::from("t");
    for l in &letters {
        probs_csv.push_str(&format!(",p_{l}"));
    }
    probs_csv.push('\n');
    for t in 0..sample.t_len {
        probs_csv.push_str(&format!("{}", t + 1));
        for k in 1..=n {
            probs_csv.push_str(&format!(",{}", sample.marginal(t, k)));
        }
        probs_csv.push('\n');
    }

    // path_mean.csv: posterior modal state per bin.
    let modal = sample.modal_path();
    let mut path_csv = String::from("t,state\n");
    for (t, &s) in modal.iter().enumerate() {
        path_csv.push_str(&format!("{},{}\n", t + 1, s));
    }

    let errors = prediction_error(sample, data)?;
    let summary = serde_json::to_string_pretty(&summary_json(sample, data, cfg, &errors))
        .expect("summary serializes");

    let files = [
        ("draws.csv", draws_csv),
        ("state_probs.csv", probs_csv),
        ("summary.json", summary + "\n"),
        ("path_mean.csv", path_csv),
    ];
    let mut written = Vec::new();
    for (name, content) in files {
        write_atomic(&dir.join(name), content.as_bytes())?;
        written.push(name.to_string());
    }
    Ok(written)
}

/// Run manifest: seed, resolved configuration, versions, wall time.
#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmin_tau: Option<f64>,
    /// The fully resolved TOML configuration; re-running it reproduces the
    /// outputs byte for byte.
    pub config: String,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf, CliError> {
    let path = dir.join("run_manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_atomic(&path, (text + "\n").as_bytes())?;
    Ok(path)
}

/// Simulated dataset in the ingestible schema: events.csv, optional
/// entries.csv, and the generating truth path.
pub fn emit_simulation(
    data: &CountSeries,
    path: &[u8],
    dir: &Path,
) -> Result<Vec<String>, CliError> {
    let mut events = String::from("start_s\n");
    for (t, &c) in data.counts.iter().enumerate() {
        for _ in 0..c {
            events.push_str(&format!("{}\n", t + 1));
        }
    }
    let mut truth = String::from("t,state\n");
    for (t, &s) in path.iter().enumerate() {
        truth.push_str(&format!("{},{}\n", t + 1, s));
    }

    let mut written = Vec::new();
    write_atomic(&dir.join("events.csv"), events.as_bytes())?;
    written.push("events.csv".to_string());
    if let Some(entrances) = &data.entrance_times {
        let mut entries = String::from("entry_s\n");
        for &e in entrances {
            entries.push_str(&format!("{e}\n"));
        }
        write_atomic(&dir.join("entries.csv"), entries.as_bytes())?;
        written.push("entries.csv".to_string());
    }
    write_atomic(&dir.join("truth_path.csv"), truth.as_bytes())?;
    written.push("truth_path.csv".to_string());
    Ok(written)
}
