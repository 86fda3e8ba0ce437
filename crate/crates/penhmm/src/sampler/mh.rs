//! Adaptive random-walk Metropolis-Hastings updates for the switching-rate
//! blocks.
//!
//! Rates are proposed jointly on the log scale, so the target picks up the
//! log-normal change-of-variables term `sum log gamma` on top of the path
//! likelihood and the shrinkage prior. Proposals that would leave the valid
//! transition-matrix regime are rejected outright.
//!
//! Proposal scales follow the log-adaptive scheme: after every batch of
//! `batch` proposals the log step moves by `sign(rate - target) * min(0.5,
//! batch_count^{-1/2})`, a diminishing-adaptation rule; the adapter is frozen
//! at the end of burn-in so retained draws target the exact posterior.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chain::{covariate_link, ptm_from_rates};
use crate::model::{CovariateParams, Hyperparams, PenaltyFamily, PenaltySpec, SwitchRates};

/// Target acceptance rate for a 1-2 parameter block.
pub const TARGET_ACCEPT_SMALL_BLOCK: f64 = 0.44;
/// Target acceptance rate for blocks of three or more parameters.
pub const TARGET_ACCEPT_LARGE_BLOCK: f64 = 0.234;

/// State of the log-adaptive proposal tuner for one block.
#[derive(Debug, Clone)]
pub struct MhAdapter {
    pub log_step: f64,
    pub target_accept: f64,
    pub batch: usize,
    accept_count: usize,
    within_batch: usize,
    batches_done: usize,
    frozen: bool,
}

impl MhAdapter {
    pub fn new(initial_step: f64, target_accept: f64, batch: usize) -> Self {
        assert!(initial_step > 0.0 && batch > 0);
        Self {
            log_step: initial_step.ln(),
            target_accept,
            batch,
            accept_count: 0,
            within_batch: 0,
            batches_done: 0,
            frozen: false,
        }
    }

    /// Standard target rate for a block of `dim` jointly-proposed parameters.
    pub fn target_for_dim(dim: usize) -> f64 {
        if dim <= 2 {
            TARGET_ACCEPT_SMALL_BLOCK
        } else {
            TARGET_ACCEPT_LARGE_BLOCK
        }
    }

    /// Current proposal standard deviation.
    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    /// Record one accept/reject outcome; every `batch` observations the log
    /// step moves by `sign(rate - target) * min(0.5, batch_count^{-1/2})`.
    /// No-op once frozen.
    pub fn observe(&mut self, accepted: bool) {
        if self.frozen {
            return;
        }
        if accepted {
            self.accept_count += 1;
        }
        self.within_batch += 1;
        if self.within_batch == self.batch {
            let rate = self.accept_count as f64 / self.batch as f64;
            let delta = (1.0 / ((self.batches_done + 1) as f64).sqrt()).min(0.5);
            if rate > self.target_accept {
                self.log_step += delta;
            } else if rate < self.target_accept {
                self.log_step -= delta;
            }
            self.batches_done += 1;
            self.accept_count = 0;
            self.within_batch = 0;
        }
    }

    /// Stop adapting; called at the end of burn-in.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }
}

/// Transition counts `n_ij` over a path of 1-based states.
pub(crate) fn transition_counts(path: &[u8], n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n * n];
    for w in path.windows(2) {
        counts[(usize::from(w[0]) - 1) * n + (usize::from(w[1]) - 1)] += 1;
    }
    counts
}

/// Log full conditional of the rates given transition counts, including the
/// shrinkage prior and the log-scale Jacobian. `-inf` outside the valid
/// regime.
pub(crate) fn log_rates_target(
    rates: &SwitchRates,
    counts: &[u64],
    penalty: &PenaltySpec,
    dt: f64,
) -> f64 {
    let n = rates.n;
    let p = match ptm_from_rates(rates, dt) {
        Ok(p) => p,
        Err(_) => return f64::NEG_INFINITY,
    };
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = counts[i * n + j];
            if c == 0 {
                continue;
            }
            let pij = p.get(i, j);
            if pij <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += c as f64 * pij.ln();
        }
    }
    for (_, _, g) in rates.off_diagonal() {
        if !(g > 0.0) {
            return f64::NEG_INFINITY;
        }
        acc += penalty.log_prior(g) + g.ln();
    }
    acc
}

/// One joint random-walk MH step on the log switching rates. Returns the new
/// state (the input when rejected) and whether the proposal was accepted.
pub fn update_rates_mh<R: Rng + ?Sized>(
    current: &SwitchRates,
    path: &[u8],
    penalty: &PenaltySpec,
    dt: f64,
    adapter: &MhAdapter,
    rng: &mut R,
) -> (SwitchRates, bool) {
    let counts = transition_counts(path, current.n);
    update_rates_mh_with_counts(current, &counts, penalty, dt, adapter, rng)
}

pub(crate) fn update_rates_mh_with_counts<R: Rng + ?Sized>(
    current: &SwitchRates,
    counts: &[u64],
    penalty: &PenaltySpec,
    dt: f64,
    adapter: &MhAdapter,
    rng: &mut R,
) -> (SwitchRates, bool) {
    let n = current.n;
    let step = adapter.step();
    let mut proposal = current.clone();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let z: f64 = StandardNormal.sample(rng);
                proposal.set(i, j, (current.get(i, j).ln() + step * z).exp());
            }
        }
    }
    let cur = log_rates_target(current, counts, penalty, dt);
    let prop = log_rates_target(&proposal, counts, penalty, dt);
    if accept_log_ratio(prop - cur, rng) {
        (proposal, true)
    } else {
        (current.clone(), false)
    }
}

/// Log full conditional of the covariate block `(mu, beta, alpha)`: the
/// time-varying path likelihood, the scaled half-normal (or exponential)
/// prior on `exp(mu)` with its `c(beta)` normalizer recomputed at the
/// proposed beta, normal priors on beta and alpha, and the `mu`-space
/// Jacobian.
pub(crate) fn log_covariate_target(
    params: &CovariateParams,
    path: &[u8],
    w: &[f64],
    penalty: &PenaltySpec,
    hyper: &Hyperparams,
    dt: f64,
) -> f64 {
    let n = params.n;
    let t_len = path.len();
    debug_assert!(w.len() >= t_len);

    // f(w_t) is shared by the path term and every c(beta) normalizer.
    let f: Vec<f64> = w[..t_len]
        .iter()
        .map(|&wt| covariate_link(wt, params.alpha))
        .collect();

    let mut acc = 0.0;
    let check_regime = dt < (-1.0f64).exp();
    for t in 0..t_len.saturating_sub(1) {
        let i = usize::from(path[t]) - 1;
        let j = usize::from(path[t + 1]) - 1;
        let ft = f[t];
        let mut exit = 0.0;
        let mut gij = 0.0;
        for k in 0..n {
            if k != i {
                let g = (params.mu_at(i, k) + params.beta_at(i, k) * ft).exp();
                exit += g;
                if k == j {
                    gij = g;
                }
            }
        }
        let decay = (-exit * dt).exp();
        let mass = exit * decay;
        if check_regime && mass > 1.0 {
            return f64::NEG_INFINITY;
        }
        let p = if i == j { 1.0 - mass } else { gij * decay };
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += p.ln();
    }

    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mu = params.mu_at(i, j);
            let beta = params.beta_at(i, j);
            match penalty.family {
                PenaltyFamily::None => {}
                PenaltyFamily::Ridge => {
                    // exp(mu) * c(beta) ~ half-normal(0, tau): in mu-space the
                    // density is log c - c^2 e^{2 mu} / (2 tau) + mu.
                    let c = mean_exp_beta_f(beta, &f);
                    acc += c.ln() - c * c * (2.0 * mu).exp() / (2.0 * penalty.tau) + mu;
                }
                PenaltyFamily::Lasso => {
                    let c = mean_exp_beta_f(beta, &f);
                    acc += c.ln() - c * mu.exp() / penalty.tau + mu;
                }
            }
            let (bm, bv) = hyper.beta_prior;
            acc -= (beta - bm) * (beta - bm) / (2.0 * bv);
        }
    }
    let (am, av) = hyper.alpha_prior;
    acc -= (params.alpha - am) * (params.alpha - am) / (2.0 * av);
    acc
}

/// `c(beta)` against an already-transformed covariate series.
fn mean_exp_beta_f(beta: f64, f: &[f64]) -> f64 {
    f.iter().map(|&ft| (beta * ft).exp()).sum::<f64>() / f.len() as f64
}

/// One joint random-walk MH step on `(mu_ij, beta_ij, alpha)`.
#[allow(clippy::too_many_arguments)]
pub fn update_covariate_params_mh<R: Rng + ?Sized>(
    current: &CovariateParams,
    path: &[u8],
    w: &[f64],
    penalty: &PenaltySpec,
    hyper: &Hyperparams,
    dt: f64,
    adapter: &MhAdapter,
    rng: &mut R,
) -> (CovariateParams, bool) {
    let n = current.n;
    let step = adapter.step();
    let mut proposal = current.clone();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let z: f64 = StandardNormal.sample(rng);
                proposal.mu[i * n + j] += step * z;
                let z: f64 = StandardNormal.sample(rng);
                proposal.beta[i * n + j] += step * z;
            }
        }
    }
    let z: f64 = StandardNormal.sample(rng);
    proposal.alpha += step * z;

    let cur = log_covariate_target(current, path, w, penalty, hyper, dt);
    let prop = log_covariate_target(&proposal, path, w, penalty, hyper, dt);
    if accept_log_ratio(prop - cur, rng) {
        (proposal, true)
    } else {
        (current.clone(), false)
    }
}

fn accept_log_ratio<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if !log_ratio.is_finite() {
        return log_ratio == f64::INFINITY;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_ratio
}
