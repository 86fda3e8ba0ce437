//! MCMC engine: the per-iteration sweep and chain orchestration.
//!
//! Each sweep follows the fitting order of the underlying algorithm:
//! (1) transition parameters (Dirichlet Gibbs, rate MH, or joint covariate
//! MH), (2) an FFBS draw of the latent path, (3) the multinomial
//! augmentation split, (4) conjugate Gibbs draws of the emission rates.
//!
//! A chain is deterministic given its seed: the RNG is a counter-based
//! stream, and multi-chain runs assign one stream per chain up front, so
//! results do not depend on scheduling.

mod ffbs;
mod mh;

pub use ffbs::{backward_sample, forward_filter, ForwardMatrix};
pub use mh::{
    update_covariate_params_mh, update_rates_mh, MhAdapter, TARGET_ACCEPT_LARGE_BLOCK,
    TARGET_ACCEPT_SMALL_BLOCK,
};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{
    covariate_series, fill_tv_kernels, ptm_from_rates, update_dirichlet_rows, Kernels,
    ProbabilityRows,
};
use crate::emission::{split_counts_into, update_emission_rates};
use crate::exec;
use crate::model::{
    CountSeries, CovariateParams, EmissionParams, McmcSettings, ModelSpec, ParamState,
    ParamSummary, PosteriorSample, SwitchRates, TransitionModel, TransitionParams,
};
use crate::stats;
use crate::{Error, Result};

/// Initial proposal standard deviation on the log scale.
const INITIAL_MH_STEP: f64 = 0.1;
/// Adaptation batch size.
const ADAPT_BATCH: usize = 50;

/// Run one chain. Deterministic given `seed`.
pub fn run_chain(
    spec: &ModelSpec,
    data: &CountSeries,
    mcmc: &McmcSettings,
    seed: u64,
) -> Result<PosteriorSample> {
    run_chain_stream(spec, data, mcmc, seed, 0)
}

/// Run `n_chains` independent chains (in parallel when the `parallel`
/// feature is on) and merge their retained draws. Chain `i` uses RNG stream
/// `i` of the same seed, so the merged result is identical however the
/// chains are scheduled.
pub fn run_chains(
    spec: &ModelSpec,
    data: &CountSeries,
    mcmc: &McmcSettings,
    seed: u64,
    n_chains: usize,
) -> Result<PosteriorSample> {
    let results = exec::par_map(chain_jobs(n_chains)?, |stream| {
        run_chain_stream(spec, data, mcmc, seed, stream)
    });
    merge_samples(results)
}

/// Sequential twin of [`run_chains`], bit-identical output; used by the
/// benchmark suite to measure the parallel speedup.
pub fn run_chains_serial(
    spec: &ModelSpec,
    data: &CountSeries,
    mcmc: &McmcSettings,
    seed: u64,
    n_chains: usize,
) -> Result<PosteriorSample> {
    let results = exec::serial_map(chain_jobs(n_chains)?, |stream| {
        run_chain_stream(spec, data, mcmc, seed, stream)
    });
    merge_samples(results)
}

fn chain_jobs(n_chains: usize) -> Result<Vec<u64>> {
    if n_chains == 0 {
        return Err(Error::Config("need at least one chain".into()));
    }
    Ok((0..n_chains as u64).collect())
}

pub(crate) fn run_chain_stream(
    spec: &ModelSpec,
    data: &CountSeries,
    mcmc: &McmcSettings,
    seed: u64,
    stream: u64,
) -> Result<PosteriorSample> {
    spec.validate(data)?;
    mcmc.validate()?;

    let n = spec.n_states;
    let counts = &data.counts;
    let t_len = counts.len();
    let dt = data.dt;
    let pi0 = spec.hyper.pi0.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let w: Option<Vec<f64>> = match &spec.transition {
        TransitionModel::Covariate {
            transform,
            initial_wait,
            ..
        } => Some(covariate_series(
            data.entrance_times.as_deref().unwrap_or(&[]),
            t_len,
            dt,
            *initial_wait,
            *transform,
        )),
        _ => None,
    };

    // Starting state: spec'd parameter values and the data-driven indicator
    // path (top state wherever an event occurred).
    let mut emission = EmissionParams::from_totals(&spec.init.lambda_totals)?;
    let mut path: Vec<u8> = counts
        .iter()
        .map(|&c| if c > 0 { n as u8 } else { 1 })
        .collect();
    let mut trans = initial_transitions(spec)?;
    let mut aug = vec![0u32; n * t_len];
    let mut split_buf = vec![0u32; n];
    split_all(counts, &path, &emission, &mut rng, &mut split_buf, &mut aug);

    let mh_dim = match &spec.transition {
        TransitionModel::Dirichlet => 0,
        TransitionModel::Rates { .. } => n * (n - 1),
        TransitionModel::Covariate { .. } => 2 * n * (n - 1) + 1,
    };
    let mut adapter = MhAdapter::new(INITIAL_MH_STEP, MhAdapter::target_for_dim(mh_dim), ADAPT_BATCH);

    let mut kernels = initial_kernels(&trans, w.as_deref(), t_len, dt)?;
    let mut fwd = ffbs::ForwardMatrix::zeroed(n, t_len);
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let mut emis_table = Vec::new();

    let retained = mcmc.retained();
    let mut draws: Vec<ParamState> = Vec::with_capacity(retained);
    let mut iterations: Vec<usize> = Vec::with_capacity(retained);
    let mut marginal_acc = vec![0.0f64; t_len * n];
    let mut post_accepts = 0u64;
    let mut post_iters = 0u64;

    for it in 1..=mcmc.iterations {
        // (1) Transition block.
        let accepted = match (&spec.transition, &mut trans) {
            (TransitionModel::Dirichlet, TransitionParams::Probabilities(p)) => {
                *p = update_dirichlet_rows(&path, &spec.hyper.theta, n, &mut rng);
                true
            }
            (TransitionModel::Rates { penalty }, TransitionParams::Rates(g)) => {
                let (next, acc) = update_rates_mh(g, &path, penalty, dt, &adapter, &mut rng);
                *g = next;
                acc
            }
            (TransitionModel::Covariate { penalty, .. }, TransitionParams::Covariate(cp)) => {
                let (next, acc) = update_covariate_params_mh(
                    cp,
                    &path,
                    w.as_deref().expect("covariate series present"),
                    penalty,
                    &spec.hyper,
                    dt,
                    &adapter,
                    &mut rng,
                );
                *cp = next;
                acc
            }
            _ => unreachable!("transition parameters match the model"),
        };
        if mh_dim > 0 {
            adapter.observe(accepted);
            if it == mcmc.burn_in {
                adapter.freeze();
            }
        }

        // (2) FFBS path draw.
        refresh_kernels(&mut kernels, &trans, w.as_deref(), t_len, dt)?;
        ffbs::emission_log_table(&emission, max_count, &mut emis_table);
        ffbs::forward_filter_into(counts, &emis_table, &kernels, &pi0, &mut fwd)?;
        ffbs::backward_sample_into(&fwd, &kernels, &mut rng, &mut path);

        // (3) Augmentation split.
        split_all(counts, &path, &emission, &mut rng, &mut split_buf, &mut aug);

        // (4) Emission Gibbs draw.
        emission = update_emission_rates(&aug, &path, &spec.hyper, &mut rng);

        if it > mcmc.burn_in {
            post_iters += 1;
            if accepted {
                post_accepts += 1;
            }
            if (it - mcmc.burn_in).is_multiple_of(mcmc.thin) {
                for (t, &x) in path.iter().enumerate() {
                    marginal_acc[t * n + usize::from(x) - 1] += 1.0;
                }
                draws.push(ParamState {
                    emission: emission.clone(),
                    transitions: trans.clone(),
                    path: path.clone(),
                    augmented_counts: aug.clone(),
                });
                iterations.push(it);
            }
        }
    }

    let n_draws = draws.len().max(1) as f64;
    for v in marginal_acc.iter_mut() {
        *v /= n_draws;
    }
    let accept_rate = if mh_dim == 0 {
        1.0
    } else if post_iters > 0 {
        post_accepts as f64 / post_iters as f64
    } else {
        0.0
    };

    let summaries = summarize(&draws);
    Ok(PosteriorSample {
        n_states: n,
        t_len,
        draws,
        iterations,
        state_marginals: marginal_acc,
        summaries,
        accept_rate,
    })
}

fn initial_transitions(spec: &ModelSpec) -> Result<TransitionParams> {
    Ok(match &spec.transition {
        TransitionModel::Dirichlet => {
            TransitionParams::Probabilities(ProbabilityRows::sticky(spec.n_states, spec.init.p_stay)?)
        }
        TransitionModel::Rates { .. } => {
            TransitionParams::Rates(SwitchRates::uniform(spec.n_states, spec.init.gamma))
        }
        TransitionModel::Covariate { .. } => TransitionParams::Covariate(CovariateParams::constant(
            spec.n_states,
            spec.init.gamma.ln(),
            spec.init.beta,
            spec.init.alpha,
        )),
    })
}

fn initial_kernels(
    trans: &TransitionParams,
    w: Option<&[f64]>,
    t_len: usize,
    dt: f64,
) -> Result<Kernels> {
    match trans {
        TransitionParams::Probabilities(p) => Ok(Kernels::Constant(p.clone())),
        TransitionParams::Rates(g) => Ok(Kernels::Constant(ptm_from_rates(g, dt)?)),
        TransitionParams::Covariate(cp) => {
            let n = cp.n;
            let steps = t_len - 1;
            let mut p = vec![0.0; steps * n * n];
            fill_tv_kernels(cp, w.expect("covariate series"), steps, dt, &mut p)?;
            Ok(Kernels::TimeVarying { n, steps, p })
        }
    }
}

/// Rebuild the kernel for the current transition parameters, reusing the
/// time-varying buffer.
fn refresh_kernels(
    kernels: &mut Kernels,
    trans: &TransitionParams,
    w: Option<&[f64]>,
    t_len: usize,
    dt: f64,
) -> Result<()> {
    match (trans, kernels) {
        (TransitionParams::Probabilities(p), k) => {
            *k = Kernels::Constant(p.clone());
            Ok(())
        }
        (TransitionParams::Rates(g), k) => {
            *k = Kernels::Constant(ptm_from_rates(g, dt)?);
            Ok(())
        }
        (TransitionParams::Covariate(cp), Kernels::TimeVarying { n, steps, p }) => {
            debug_assert_eq!((*n, *steps), (cp.n, t_len - 1));
            fill_tv_kernels(cp, w.expect("covariate series"), *steps, dt, p)
        }
        (TransitionParams::Covariate(_), _) => unreachable!("covariate kernels stay time-varying"),
    }
}

fn split_all<R: rand::Rng + ?Sized>(
    counts: &[u32],
    path: &[u8],
    emission: &EmissionParams,
    rng: &mut R,
    buf: &mut [u32],
    aug: &mut [u32],
) {
    let n = emission.n_states();
    let t_len = counts.len();
    for t in 0..t_len {
        split_counts_into(counts[t], usize::from(path[t]), emission, rng, buf);
        for k in 0..n {
            aug[k * t_len + t] = buf[k];
        }
    }
}

/// Posterior mean, equal-tailed 95% interval, and ESS for every scalar
/// parameter across a set of draws.
fn summarize(draws: &[ParamState]) -> BTreeMap<String, ParamSummary> {
    let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for draw in draws {
        for (name, value) in PosteriorSample::scalar_params(draw) {
            series.entry(name).or_default().push(value);
        }
    }
    series
        .into_iter()
        .map(|(name, xs)| {
            let mut sorted = xs.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
            let summary = ParamSummary {
                mean: stats::mean(&xs),
                lower: stats::quantile(&sorted, 0.025),
                upper: stats::quantile(&sorted, 0.975),
                ess: stats::effective_sample_size(&xs),
            };
            (name, summary)
        })
        .collect()
}

/// Merge per-chain samples into one: draws concatenate in chain order,
/// marginals are recomputed over all draws, and per-parameter ESS values add
/// across chains.
fn merge_samples(results: Vec<Result<PosteriorSample>>) -> Result<PosteriorSample> {
    let mut samples = Vec::with_capacity(results.len());
    for r in results {
        samples.push(r?);
    }
    if samples.len() == 1 {
        return Ok(samples.pop().expect("non-empty"));
    }
    let first = &samples[0];
    let (n, t_len) = (first.n_states, first.t_len);
    let mut draws = Vec::new();
    let mut iterations = Vec::new();
    let mut accept = 0.0;
    let mut ess: BTreeMap<String, f64> = BTreeMap::new();
    for s in &samples {
        if s.n_states != n || s.t_len != t_len {
            return Err(Error::Config("chains disagree on dimensions".into()));
        }
        accept += s.accept_rate;
        for (name, summ) in &s.summaries {
            *ess.entry(name.clone()).or_insert(0.0) += summ.ess;
        }
    }
    for s in &mut samples {
        draws.append(&mut s.draws);
        iterations.append(&mut s.iterations);
    }

    let mut marginal_acc = vec![0.0f64; t_len * n];
    for d in &draws {
        for (t, &x) in d.path.iter().enumerate() {
            marginal_acc[t * n + usize::from(x) - 1] += 1.0;
        }
    }
    let n_draws = draws.len().max(1) as f64;
    for v in marginal_acc.iter_mut() {
        *v /= n_draws;
    }

    let mut summaries = summarize(&draws);
    for (name, summ) in summaries.iter_mut() {
        if let Some(&total) = ess.get(name) {
            summ.ess = total;
        }
    }
    Ok(PosteriorSample {
        n_states: n,
        t_len,
        draws,
        iterations,
        state_marginals: marginal_acc,
        summaries,
        accept_rate: accept / samples.len() as f64,
    })
}
