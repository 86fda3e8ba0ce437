//! Synthetic data generation and independent verification oracles: the
//! generative sampler for the model, exhaustive path-posterior enumeration
//! (used to validate FFBS), and a 1-d grid posterior (used to validate the
//! conjugate and MH updates).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::chain::Kernels;
use crate::emission::log_pmf;
use crate::model::{CountSeries, EmissionParams};
use crate::{Error, Result};

/// Hard cap on `n_states^T` for exhaustive enumeration.
pub const ENUMERATION_CAP: f64 = 5e6;

/// Draw a latent path and counts from the generative model: `X_1 ~ pi0`,
/// `X_{t+1} ~ P_t[X_t, .]`, `N_t ~ Pois(lambda_{X_t})`. Deterministic per
/// seed.
pub fn simulate_series(
    emission: &EmissionParams,
    kernels: &Kernels,
    pi0: &[f64],
    t_len: usize,
    dt: f64,
    seed: u64,
) -> Result<(CountSeries, Vec<u8>)> {
    let n = emission.n_states();
    if kernels.n_states() != n || pi0.len() != n {
        return Err(Error::Config("dimension mismatch in simulator".into()));
    }
    if t_len < 2 {
        return Err(Error::InvalidData("need T >= 2".into()));
    }
    if let Some(steps) = kernels.steps() {
        if steps < t_len - 1 {
            return Err(Error::Config("time-varying kernel too short".into()));
        }
    }
    let rates = emission.state_rates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(t_len);
    let mut counts = Vec::with_capacity(t_len);
    let mut state = sample_category(pi0, &mut rng);
    for t in 0..t_len {
        if t > 0 {
            state = sample_category(kernels.row(t - 1, state), &mut rng);
        }
        path.push((state + 1) as u8);
        let rate = rates[state];
        let c = if rate > 0.0 {
            Poisson::new(rate)
                .map_err(|e| Error::Config(format!("bad Poisson rate {rate}: {e}")))?
                .sample(&mut rng) as u32
        } else {
            0
        };
        counts.push(c);
    }
    Ok((CountSeries::new(counts, dt, None)?, path))
}

/// Entrance times from a per-second Poisson process: each second contains an
/// entrance with probability `1 - exp(-rate)`. Returns 1-based indices.
pub fn simulate_entrances(rate_per_sec: f64, t_len: usize, seed: u64) -> Vec<usize> {
    let p = 1.0 - (-rate_per_sec).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=t_len)
        .filter(|_| rng.random::<f64>() < p)
        .collect()
}

fn sample_category<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Exact per-step state marginals and log-evidence by summing the joint
/// density over all `n^T` paths. Only feasible for tiny T; errors out above
/// [`ENUMERATION_CAP`].
pub fn enumerate_path_posterior(
    counts: &[u32],
    emission: &EmissionParams,
    kernels: &Kernels,
    pi0: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let n = emission.n_states();
    let t_len = counts.len();
    let total_paths = (n as f64).powi(t_len as i32);
    if total_paths > ENUMERATION_CAP {
        return Err(Error::TooLarge {
            paths: total_paths,
            cap: ENUMERATION_CAP,
        });
    }
    // Per-step log emission table and log kernel entries.
    let rates = emission.state_rates();
    let log_e: Vec<f64> = (0..t_len)
        .flat_map(|t| rates.iter().map(move |&r| (t, r)))
        .map(|(t, r)| log_pmf(counts[t], r))
        .collect();
    let log_joint = |path: &[usize]| -> f64 {
        let mut acc = pi0[path[0]].ln() + log_e[path[0]];
        for t in 1..t_len {
            acc += kernels.row(t - 1, path[t - 1])[path[t]].ln() + log_e[t * n + path[t]];
        }
        acc
    };

    // Pass 1: maximum joint log-density for stable exponentiation.
    let mut path = vec![0usize; t_len];
    let mut max_lp = f64::NEG_INFINITY;
    loop {
        let lp = log_joint(&path);
        if lp > max_lp {
            max_lp = lp;
        }
        if !advance(&mut path, n) {
            break;
        }
    }
    if !max_lp.is_finite() {
        return Err(Error::Numerical("all paths have zero density".into()));
    }

    // Pass 2: accumulate evidence and marginals relative to the maximum.
    let mut z = 0.0f64;
    let mut marg = vec![0.0f64; t_len * n];
    path.fill(0);
    loop {
        let w = (log_joint(&path) - max_lp).exp();
        z += w;
        for (t, &s) in path.iter().enumerate() {
            marg[t * n + s] += w;
        }
        if !advance(&mut path, n) {
            break;
        }
    }
    for v in marg.iter_mut() {
        *v /= z;
    }
    Ok((marg, max_lp + z.ln()))
}

fn advance(path: &mut [usize], n: usize) -> bool {
    for slot in path.iter_mut() {
        *slot += 1;
        if *slot < n {
            return true;
        }
        *slot = 0;
    }
    false
}

/// Evaluation grid for [`grid_posterior_1d`].
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// The target's support is known to end exactly at `lo` (half-normal at
    /// zero, say), so boundary mass there does not indicate truncation.
    pub closed_lo: bool,
}

impl GridSpec {
    pub fn open(lo: f64, hi: f64, points: usize) -> Self {
        Self {
            lo,
            hi,
            points,
            closed_lo: false,
        }
    }

    /// Grid from a hard support edge at `lo`.
    pub fn from_edge(lo: f64, hi: f64, points: usize) -> Self {
        Self {
            lo,
            hi,
            points,
            closed_lo: true,
        }
    }
}

/// A normalized density tabulated on a uniform grid.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
}

impl GridPosterior {
    fn dx(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    pub fn mean(&self) -> f64 {
        self.moment(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(|x| (x - m) * (x - m))
    }

    fn moment<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        // Trapezoid rule against the normalized density.
        let dx = self.dx();
        let n = self.xs.len();
        let mut acc = 0.0;
        for i in 0..n - 1 {
            acc += 0.5
                * dx
                * (f(self.xs[i]) * self.density[i] + f(self.xs[i + 1]) * self.density[i + 1]);
        }
        acc
    }

    /// CDF at x by trapezoid integration, clamped to [0, 1].
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let dx = self.dx();
        let idx = ((x - self.xs[0]) / dx).floor() as usize;
        let idx = idx.min(n - 2);
        let mut acc = 0.0;
        for i in 0..idx {
            acc += 0.5 * dx * (self.density[i] + self.density[i + 1]);
        }
        // Partial cell, linear density interpolation.
        let frac = (x - self.xs[idx]) / dx;
        let d_at = self.density[idx] * (1.0 - frac) + self.density[idx + 1] * frac;
        acc += 0.5 * (x - self.xs[idx]) * (self.density[idx] + d_at);
        acc.clamp(0.0, 1.0)
    }

    /// Kolmogorov distance between an empirical sample and this grid CDF.
    pub fn ks_distance(&self, samples: &mut [f64]) -> f64 {
        crate::stats::ks_distance(samples, |x| self.cdf_at(x))
    }
}

/// Normalized posterior on a 1-d grid from an unnormalized log-target.
/// Fails with [`Error::SupportNotCovered`] if the outermost cells carry more
/// than 1e-6 of the mass.
pub fn grid_posterior_1d<F: Fn(f64) -> f64>(log_target: F, spec: &GridSpec) -> Result<GridPosterior> {
    if spec.points < 16 || !(spec.hi > spec.lo) {
        return Err(Error::Config("degenerate grid".into()));
    }
    let dx = (spec.hi - spec.lo) / (spec.points - 1) as f64;
    let xs: Vec<f64> = (0..spec.points).map(|i| spec.lo + dx * i as f64).collect();
    let logs: Vec<f64> = xs.iter().map(|&x| log_target(x)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical("log-target is -inf on the grid".into()));
    }
    let mut density: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let mut z = 0.0;
    for i in 0..spec.points - 1 {
        z += 0.5 * dx * (density[i] + density[i + 1]);
    }
    if !(z > 0.0) {
        return Err(Error::Numerical("zero mass on the grid".into()));
    }
    for d in density.iter_mut() {
        *d /= z;
    }
    let mut boundary = 0.5 * dx * (density[spec.points - 2] + density[spec.points - 1]);
    if !spec.closed_lo {
        boundary += 0.5 * dx * (density[0] + density[1]);
    }
    if boundary > 1e-6 {
        return Err(Error::SupportNotCovered { mass: boundary });
    }
    Ok(GridPosterior { xs, density })
}
