//! Poisson emission model: log-pmf evaluation, the multinomial data
//! augmentation split, and the conjugate Gamma updates for emission rates.
//!
//! Augmentation splits each count `N_t` into independent Poisson components
//! `N_kt ~ Pois(component_rate_k)` for `k <= X_t`, which restores conjugacy:
//! the full conditional of component k's rate is
//! `Gamma(shape_k + sum of N_kt over active t, rate_k + #active t)`,
//! where a step is active when `X_t >= k`. The base component is active at
//! every step.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma};

use crate::model::{EmissionParams, Hyperparams};
use crate::stats::ln_factorial;

/// Floor applied to the total rate inside logs so transiently-zero
/// increments cannot produce log(0).
const RATE_FLOOR: f64 = 1e-300;

/// Log Poisson pmf of `count` at the state's total emission rate. `state` is
/// 1-based.
pub fn log_emission(count: u32, state: usize, emission: &EmissionParams) -> f64 {
    log_pmf(count, emission.total_rate(state))
}

/// Log Poisson pmf at an arbitrary rate.
pub fn log_pmf(count: u32, rate: f64) -> f64 {
    let rate = rate.max(RATE_FLOOR);
    f64::from(count) * rate.ln() - rate - ln_factorial(count)
}

/// Draw the augmented split of one count across the components active in
/// `state` (1-based): multinomial with probabilities proportional to the
/// component rates. Components above `state` are zero and the split always
/// sums to `count` exactly.
pub fn split_counts<R: Rng + ?Sized>(
    count: u32,
    state: usize,
    emission: &EmissionParams,
    rng: &mut R,
) -> Vec<u32> {
    let mut out = vec![0u32; emission.n_states()];
    split_counts_into(count, state, emission, rng, &mut out);
    out
}

/// In-place variant of [`split_counts`] writing one value per component.
pub fn split_counts_into<R: Rng + ?Sized>(
    count: u32,
    state: usize,
    emission: &EmissionParams,
    rng: &mut R,
    out: &mut [u32],
) {
    debug_assert!(state >= 1 && state <= emission.n_states());
    out.fill(0);
    if state == 1 || count == 0 {
        out[0] = count;
        return;
    }
    // Sequential binomial thinning; the last active component takes the
    // remainder so the split sums exactly.
    let mut remaining = u64::from(count);
    let mut total: f64 = (0..state).map(|k| emission.component_rate(k)).sum();
    for (k, slot) in out.iter_mut().enumerate().take(state - 1) {
        if remaining == 0 {
            return;
        }
        let rate_k = emission.component_rate(k);
        let p = if total > 0.0 {
            (rate_k / total).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = Binomial::new(remaining, p)
            .expect("probability in [0,1]")
            .sample(rng);
        *slot = draw as u32;
        remaining -= draw;
        total -= rate_k;
    }
    out[state - 1] = remaining as u32;
}

/// Gibbs draw of the emission rates given the augmentation and the path.
///
/// `augmented` is n x T row-major (component-major); `path` holds 1-based
/// states. With no data the draw falls back to the prior.
pub fn update_emission_rates<R: Rng + ?Sized>(
    augmented: &[u32],
    path: &[u8],
    hyper: &Hyperparams,
    rng: &mut R,
) -> EmissionParams {
    let n = hyper.lambda_incr.len() + 1;
    let t_len = path.len();
    debug_assert_eq!(augmented.len(), n * t_len);

    let draw = |shape: f64, rate: f64, rng: &mut R| -> f64 {
        Gamma::new(shape, 1.0 / rate)
            .expect("positive shape and scale")
            .sample(rng)
    };

    // Base component: active at every step.
    let base_sum: u64 = augmented[..t_len].iter().map(|&v| u64::from(v)).sum();
    let lambda_base = draw(
        hyper.lambda_base.shape + base_sum as f64,
        hyper.lambda_base.rate + t_len as f64,
        rng,
    );

    let mut lambda_incr = Vec::with_capacity(n - 1);
    for k in 1..n {
        let mut sum = 0u64;
        let mut active = 0u64;
        for (t, &x) in path.iter().enumerate() {
            if usize::from(x) > k {
                sum += u64::from(augmented[k * t_len + t]);
                active += 1;
            }
        }
        let prior = hyper.lambda_incr[k - 1];
        lambda_incr.push(draw(
            prior.shape + sum as f64,
            prior.rate + active as f64,
            rng,
        ));
    }

    EmissionParams {
        lambda_base,
        lambda_incr,
    }
}
