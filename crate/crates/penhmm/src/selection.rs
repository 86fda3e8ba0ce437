//! Tuning-parameter selection by one-step-ahead posterior-predictive mean
//! squared prediction error.
//!
//! For each retained draw, the one-step prediction at time t is
//! `N_hat_{t+1} = sum_k lambda_k P_t[X_t, k]` evaluated at the draw's own
//! parameters and sampled path. MSPE averages the squared errors over t and
//! over draws. The error is squared (the quantity is a mean *squared*
//! prediction error; the raw signed sum would cancel). The
//! unsquared mean error is computed alongside for reference, but the squared
//! form is authoritative and is what the sweep minimizes.

use crate::chain::{covariate_series, ptm_from_rates, tv_kernels_from_covariates, Kernels};
use crate::exec;
use crate::model::{
    CountSeries, CovariateTransform, McmcSettings, ModelSpec, ParamState, PosteriorSample,
    TransitionModel, TransitionParams,
};
use crate::sampler::run_chain_stream;
use crate::{Error, Result};

/// One-step-ahead posterior-predictive mean from a single draw:
/// `sum_k lambda_k P[X_t, k]` with the time-t kernel in the covariate model.
/// `t` is 1-based and must lie in `1..=T-1`; `w` is the covariate series
/// (required for covariate draws, ignored otherwise).
pub fn one_step_mean(draw: &ParamState, t: usize, w: Option<&[f64]>, dt: f64) -> Result<f64> {
    if t < 1 || t >= draw.path.len() {
        return Err(Error::Config(format!(
            "prediction time {t} outside 1..{}",
            draw.path.len() - 1
        )));
    }
    let kernel = match &draw.transitions {
        TransitionParams::Probabilities(p) => p.clone(),
        TransitionParams::Rates(g) => ptm_from_rates(g, dt)?,
        TransitionParams::Covariate(cp) => {
            let w = w.ok_or_else(|| {
                Error::Config("covariate draws need the covariate series".into())
            })?;
            crate::chain::ptm_from_covariates(cp, w[t - 1], dt)?
        }
    };
    let state = usize::from(draw.path[t - 1]) - 1;
    let rates = draw.emission.state_rates();
    Ok(rates
        .iter()
        .enumerate()
        .map(|(k, &r)| r * kernel.get(state, k))
        .sum())
}

/// Squared and unsquared one-step prediction errors of a posterior sample,
/// both normalized by the number of predicted steps (T - 1) and averaged
/// over draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionError {
    /// Mean squared prediction error (authoritative).
    pub mspe: f64,
    /// Mean signed prediction error, kept for reference.
    pub mean_error: f64,
}

/// Mean squared one-step-ahead prediction error; see [`prediction_error`].
pub fn mspe(sample: &PosteriorSample, data: &CountSeries) -> Result<f64> {
    Ok(prediction_error(sample, data)?.mspe)
}

/// Compute both prediction-error variants over all retained draws.
pub fn prediction_error(sample: &PosteriorSample, data: &CountSeries) -> Result<PredictionError> {
    if sample.draws.is_empty() {
        return Err(Error::Config("empty posterior sample".into()));
    }
    let t_len = data.t_len();
    let steps = (t_len - 1) as f64;
    let mut sq = 0.0;
    let mut signed = 0.0;
    for draw in &sample.draws {
        let (kernels, rates) = draw_kernels(draw, data)?;
        let mut draw_sq = 0.0;
        let mut draw_signed = 0.0;
        for t in 0..t_len - 1 {
            let state = usize::from(draw.path[t]) - 1;
            let row = kernels.row(t, state);
            let mut pred = 0.0;
            for (k, &r) in rates.iter().enumerate() {
                pred += r * row[k];
            }
            let err = pred - f64::from(data.counts[t + 1]);
            draw_sq += err * err;
            draw_signed += err;
        }
        sq += draw_sq / steps;
        signed += draw_signed / steps;
    }
    let n_draws = sample.draws.len() as f64;
    Ok(PredictionError {
        mspe: sq / n_draws,
        mean_error: signed / n_draws,
    })
}

fn draw_kernels(draw: &ParamState, data: &CountSeries) -> Result<(Kernels, Vec<f64>)> {
    let rates = draw.emission.state_rates();
    let kernels = match &draw.transitions {
        TransitionParams::Probabilities(p) => Kernels::Constant(p.clone()),
        TransitionParams::Rates(g) => Kernels::Constant(ptm_from_rates(g, data.dt)?),
        TransitionParams::Covariate(cp) => {
            let w = covariate_series(
                data.entrance_times.as_deref().unwrap_or(&[]),
                data.t_len(),
                data.dt,
                1e6,
                CovariateTransform::Elapsed,
            );
            tv_kernels_from_covariates(cp, &w, data.t_len() - 1, data.dt)?
        }
    };
    Ok((kernels, rates))
}

/// One grid point of a tau sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub log_tau: f64,
    pub mspe: f64,
    pub mean_switches: f64,
    pub accept_rate: f64,
}

/// Sweep results sorted by tau, with the MSPE argmin flagged and per-point
/// failures kept separately (a failing grid point does not abort the sweep).
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the smallest MSPE, when any row succeeded.
    pub argmin: Option<usize>,
    /// (tau, error message) for grid points whose fit failed.
    pub failures: Vec<(f64, String)>,
}

impl SweepTable {
    /// Delimited text: header plus one row per grid point.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("tau,log_tau,mspe,mean_switches,accept_rate\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.tau, r.log_tau, r.mspe, r.mean_switches, r.accept_rate
            ));
        }
        out
    }

    pub fn argmin_row(&self) -> Option<&SweepRow> {
        self.argmin.map(|i| &self.rows[i])
    }
}

/// Fit the template model once per tau (grid points and their chains run in
/// parallel) and tabulate MSPE, posterior mean switch count, and acceptance
/// rate. The template's penalty family is kept; only tau varies.
pub fn tau_sweep(
    template: &ModelSpec,
    data: &CountSeries,
    mcmc: &McmcSettings,
    tau_grid: &[f64],
    chains_per_tau: usize,
    seed: u64,
) -> Result<SweepTable> {
    if tau_grid.is_empty() {
        return Err(Error::Config("empty tau grid".into()));
    }
    if tau_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Config("tau grid values must be positive".into()));
    }
    if chains_per_tau == 0 {
        return Err(Error::Config("need at least one chain per tau".into()));
    }
    match &template.transition {
        TransitionModel::Rates { .. } | TransitionModel::Covariate { .. } => {}
        TransitionModel::Dirichlet => {
            return Err(Error::Config(
                "tau sweep needs a penalized transition model".into(),
            ))
        }
    }

    let mut taus: Vec<f64> = tau_grid.to_vec();
    taus.sort_by(|a, b| a.partial_cmp(b).expect("finite taus"));

    // One job per (tau, chain); chain streams are assigned up front so the
    // result is schedule-independent.
    let jobs: Vec<(usize, u64)> = (0..taus.len())
        .flat_map(|ti| (0..chains_per_tau as u64).map(move |c| (ti, c)))
        .collect();
    let chain_results = exec::par_map(jobs, |(ti, chain)| {
        let spec = with_tau(template, taus[ti]);
        let stream = ti as u64 * 1000 + chain;
        (ti, run_chain_stream(&spec, data, mcmc, seed, stream))
    });

    // Regroup by grid point.
    let mut per_tau: Vec<Vec<crate::Result<PosteriorSample>>> =
        (0..taus.len()).map(|_| Vec::new()).collect();
    for (ti, r) in chain_results {
        per_tau[ti].push(r);
    }

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (ti, results) in per_tau.into_iter().enumerate() {
        let tau = taus[ti];
        match merge_for_sweep(results) {
            Ok(sample) => match mspe(&sample, data) {
                Ok(value) => rows.push(SweepRow {
                    tau,
                    log_tau: tau.ln(),
                    mspe: value,
                    mean_switches: sample.mean_switches(),
                    accept_rate: sample.accept_rate,
                }),
                Err(e) => failures.push((tau, e.to_string())),
            },
            Err(e) => failures.push((tau, e.to_string())),
        }
    }

    let argmin = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.mspe.is_finite())
        .min_by(|a, b| a.1.mspe.partial_cmp(&b.1.mspe).expect("finite"))
        .map(|(i, _)| i);
    Ok(SweepTable {
        rows,
        argmin,
        failures,
    })
}

fn with_tau(template: &ModelSpec, tau: f64) -> ModelSpec {
    let mut spec = template.clone();
    match &mut spec.transition {
        TransitionModel::Rates { penalty } => penalty.tau = tau,
        TransitionModel::Covariate { penalty, .. } => penalty.tau = tau,
        TransitionModel::Dirichlet => {}
    }
    spec
}

fn merge_for_sweep(results: Vec<crate::Result<PosteriorSample>>) -> Result<PosteriorSample> {
    let mut merged: Option<PosteriorSample> = None;
    for r in results {
        let s = r?;
        merged = Some(match merged {
            None => s,
            Some(mut acc) => {
                acc.draws.extend(s.draws);
                acc.iterations.extend(s.iterations);
                acc.accept_rate = (acc.accept_rate + s.accept_rate) / 2.0;
                acc
            }
        });
    }
    merged.ok_or_else(|| Error::Config("no chains".into()))
}
