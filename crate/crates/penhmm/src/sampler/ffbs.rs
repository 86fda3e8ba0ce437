//! Forward-filtering backward-sampling.
//!
//! The forward pass keeps each row of alpha normalized and stores the log
//! normalizer, with the per-step emission maximum shifted out before
//! exponentiation, so the exact log-likelihood `sum_t log(row sum)` is
//! recoverable without underflow at any series length.

use rand::Rng;

use crate::chain::Kernels;
use crate::emission::log_pmf;
use crate::model::EmissionParams;
use crate::{Error, Result};

/// Largest state count the stack-allocated inner loops support. All models
/// in scope use n <= 3.
pub(crate) const MAX_STATES: usize = 8;

/// Scaled forward probabilities: row t holds `alpha_t` normalized to sum 1,
/// with the log of the removed scale in `log_scale[t]`.
#[derive(Debug, Clone)]
pub struct ForwardMatrix {
    n: usize,
    t_len: usize,
    weights: Vec<f64>,
    log_scale: Vec<f64>,
}

impl ForwardMatrix {
    pub(crate) fn zeroed(n: usize, t_len: usize) -> Self {
        Self {
            n,
            t_len,
            weights: vec![0.0; n * t_len],
            log_scale: vec![0.0; t_len],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    /// Normalized forward row at time t (0-based).
    pub fn row(&self, t: usize) -> &[f64] {
        &self.weights[t * self.n..(t + 1) * self.n]
    }

    /// Exact log-likelihood of the counts given the parameters.
    pub fn log_likelihood(&self) -> f64 {
        self.log_scale.iter().sum()
    }
}

/// Per-state log emission table for every distinct count value up to
/// `max_count`; entry `(c, k)` lives at `c * n + k`.
pub(crate) fn emission_log_table(emission: &EmissionParams, max_count: u32, table: &mut Vec<f64>) {
    let n = emission.n_states();
    let rates = emission.state_rates();
    table.clear();
    table.reserve((max_count as usize + 1) * n);
    for c in 0..=max_count {
        for &r in &rates {
            table.push(log_pmf(c, r));
        }
    }
}

/// Run the forward recursion, allocating the result.
pub fn forward_filter(
    counts: &[u32],
    emission: &EmissionParams,
    kernels: &Kernels,
    pi0: &[f64],
) -> Result<ForwardMatrix> {
    let n = emission.n_states();
    let mut fwd = ForwardMatrix::zeroed(n, counts.len());
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let mut table = Vec::new();
    emission_log_table(emission, max_count, &mut table);
    forward_filter_into(counts, &table, kernels, pi0, &mut fwd)?;
    Ok(fwd)
}

/// Forward recursion into a reusable buffer; `table` comes from
/// [`emission_log_table`].
pub(crate) fn forward_filter_into(
    counts: &[u32],
    table: &[f64],
    kernels: &Kernels,
    pi0: &[f64],
    fwd: &mut ForwardMatrix,
) -> Result<()> {
    let n = fwd.n;
    let t_len = counts.len();
    assert!((1..=MAX_STATES).contains(&n));
    assert_eq!(fwd.t_len, t_len);
    assert_eq!(pi0.len(), n);
    if t_len == 0 {
        return Err(Error::InvalidData("empty series".into()));
    }
    if kernels.n_states() != n {
        return Err(Error::Config("kernel dimension mismatch".into()));
    }
    if let Some(steps) = kernels.steps() {
        if steps + 1 < t_len {
            return Err(Error::Config("time-varying kernel too short".into()));
        }
    }

    let mut e = [0.0f64; MAX_STATES];
    let mut acc = [0.0f64; MAX_STATES];

    for t in 0..t_len {
        // Shift the per-step emission maximum out of the exponent.
        let row_log = &table[counts[t] as usize * n..counts[t] as usize * n + n];
        let mut m = f64::NEG_INFINITY;
        for &l in row_log {
            if l > m {
                m = l;
            }
        }
        for k in 0..n {
            e[k] = (row_log[k] - m).exp();
        }

        if t == 0 {
            for k in 0..n {
                acc[k] = pi0[k] * e[k];
            }
        } else {
            let prev = &fwd.weights[(t - 1) * n..t * n];
            let mut fold = [0.0f64; MAX_STATES];
            for (i, &wi) in prev.iter().enumerate() {
                if wi == 0.0 {
                    continue;
                }
                let krow = kernels.row(t - 1, i);
                for j in 0..n {
                    fold[j] += wi * krow[j];
                }
            }
            for j in 0..n {
                acc[j] = fold[j] * e[j];
            }
        }

        let sum: f64 = acc[..n].iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::Numerical(format!(
                "forward filter underflow at t = {t}"
            )));
        }
        let out = &mut fwd.weights[t * n..(t + 1) * n];
        for k in 0..n {
            out[k] = acc[k] / sum;
        }
        fwd.log_scale[t] = sum.ln() + m;
    }
    Ok(())
}

/// Draw a path from the exact joint full conditional given the forward pass,
/// sampling `X_T` from the final row and walking backwards with
/// `P(X_t = i) ∝ alpha_t(i) K_t[i, X_{t+1}]`.
pub fn backward_sample<R: Rng + ?Sized>(
    fwd: &ForwardMatrix,
    kernels: &Kernels,
    rng: &mut R,
) -> Vec<u8> {
    let mut path = vec![0u8; fwd.t_len];
    backward_sample_into(fwd, kernels, rng, &mut path);
    path
}

pub(crate) fn backward_sample_into<R: Rng + ?Sized>(
    fwd: &ForwardMatrix,
    kernels: &Kernels,
    rng: &mut R,
    path: &mut [u8],
) {
    let n = fwd.n;
    let t_len = fwd.t_len;
    assert_eq!(path.len(), t_len);

    let mut probs = [0.0f64; MAX_STATES];
    let last = fwd.row(t_len - 1);
    let mut state = sample_weighted(last, rng);
    path[t_len - 1] = (state + 1) as u8;

    for t in (0..t_len - 1).rev() {
        let row = fwd.row(t);
        for i in 0..n {
            probs[i] = row[i] * kernels.row(t, i)[state];
        }
        state = sample_weighted(&probs[..n], rng);
        path[t] = (state + 1) as u8;
    }
}

fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "degenerate backward weights");
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}
