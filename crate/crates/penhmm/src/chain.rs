//! Transition-kernel construction.
//!
//! Three routes produce a row-stochastic matrix:
//!
//! * [`update_dirichlet_rows`] — the standard model's conjugate Gibbs draw,
//! * [`ptm_from_rates`] — the CTMC one-jump discretization
//!   `p_ij = gamma_ij * exp(-gamma_i. * dt)` used by the penalized model,
//! * [`ptm_from_covariates`] — the time-varying covariate version.
//!
//! The CTMC route is only valid while every off-diagonal row sum stays at or
//! below 1. The row sum equals `gamma_i. * exp(-gamma_i. * dt)`, whose
//! maximum over the exit rate is `exp(-1) / dt` at `gamma_i. = 1/dt`, so for
//! `dt >= exp(-1)` the matrix is valid for *any* non-negative rates;
//! [`is_valid_ptm_regime`] short-circuits on that case.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::model::{CovariateParams, CovariateTransform, SwitchRates};
use crate::{Error, Result};

/// A row-stochastic transition probability matrix, flat row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRows {
    pub n: usize,
    p: Vec<f64>,
}

impl ProbabilityRows {
    /// Validating constructor: entries in [0, 1], rows summing to 1 within
    /// 1e-12.
    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n * n {
            return Err(Error::InvalidData("matrix has wrong size".into()));
        }
        let rows = Self { n, p };
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let v = rows.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidData(format!(
                        "entry ({i},{j}) = {v} outside [0,1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidData(format!("row {i} sums to {sum}")));
            }
        }
        Ok(rows)
    }

    /// Rescale each row to sum to 1. Accepts matrices quoted at limited
    /// precision (rows off by rounding), rejects non-positive rows.
    pub fn normalized(n: usize, mut p: Vec<f64>) -> Result<Self> {
        if p.len() != n * n {
            return Err(Error::InvalidData("matrix has wrong size".into()));
        }
        for i in 0..n {
            let row = &mut p[i * n..(i + 1) * n];
            if row.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::InvalidData(format!("row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) {
                return Err(Error::InvalidData(format!("row {i} sums to zero")));
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Self::new(n, p)
    }

    /// Diagonal `stay` probability with the rest spread uniformly off it.
    pub fn sticky(n: usize, stay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&stay) {
            return Err(Error::InvalidData("stay probability outside [0,1]".into()));
        }
        let off = (1.0 - stay) / (n - 1) as f64;
        let mut p = vec![off; n * n];
        for i in 0..n {
            p[i * n + i] = stay;
        }
        Self::normalized(n, p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.n..(i + 1) * self.n]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.p
    }
}

/// A transition kernel, constant or per-step. In the time-varying case
/// `row(t, i)` is the row of the kernel governing the step from time t + 1
/// to t + 2 (0-based t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Kernels {
    Constant(ProbabilityRows),
    TimeVarying {
        n: usize,
        steps: usize,
        /// steps x n x n, flat.
        p: Vec<f64>,
    },
}

impl Kernels {
    pub fn n_states(&self) -> usize {
        match self {
            Kernels::Constant(p) => p.n,
            Kernels::TimeVarying { n, .. } => *n,
        }
    }

    /// Number of steps this kernel can drive; `None` means unlimited.
    pub fn steps(&self) -> Option<usize> {
        match self {
            Kernels::Constant(_) => None,
            Kernels::TimeVarying { steps, .. } => Some(*steps),
        }
    }

    #[inline]
    pub fn row(&self, t: usize, i: usize) -> &[f64] {
        match self {
            Kernels::Constant(p) => p.row(i),
            Kernels::TimeVarying { n, p, .. } => {
                let base = (t * n + i) * n;
                &p[base..base + n]
            }
        }
    }

    /// The kernel for one step as a standalone matrix.
    pub fn at(&self, t: usize) -> ProbabilityRows {
        match self {
            Kernels::Constant(p) => p.clone(),
            Kernels::TimeVarying { n, p, .. } => {
                ProbabilityRows::new(*n, p[t * n * n..(t + 1) * n * n].to_vec())
                    .expect("stored kernels are valid")
            }
        }
    }
}

/// Gibbs draw of the standard model's transition rows: row l comes from
/// Dirichlet(theta_l + observed transition counts out of state l).
pub fn update_dirichlet_rows<R: Rng + ?Sized>(
    path: &[u8],
    theta: &[f64],
    n: usize,
    rng: &mut R,
) -> ProbabilityRows {
    assert!(path.len() >= 2, "need at least one transition");
    assert_eq!(theta.len(), n * n);
    let mut counts = vec![0u64; n * n];
    for w in path.windows(2) {
        counts[(usize::from(w[0]) - 1) * n + (usize::from(w[1]) - 1)] += 1;
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        // Dirichlet via normalized Gamma(alpha_j, 1) draws.
        let mut sum = 0.0;
        for j in 0..n {
            let alpha = theta[i * n + j] + counts[i * n + j] as f64;
            let g: f64 = Gamma::new(alpha, 1.0).expect("positive shape").sample(rng);
            p[i * n + j] = g;
            sum += g;
        }
        for j in 0..n {
            p[i * n + j] /= sum;
        }
    }
    ProbabilityRows::new(n, p).expect("normalized rows")
}

/// True iff every row satisfies `gamma_i. * exp(-gamma_i. * dt) <= 1`.
///
/// For `dt >= exp(-1)` this holds for any non-negative rates and the check
/// short-circuits without touching the matrix.
pub fn is_valid_ptm_regime(rates: &SwitchRates, dt: f64) -> bool {
    debug_assert!(dt > 0.0);
    if dt >= (-1.0f64).exp() {
        return true;
    }
    (0..rates.n).all(|i| {
        let exit = rates.exit_rate(i);
        exit * (-exit * dt).exp() <= 1.0
    })
}

/// CTMC-derived transition matrix: off-diagonal `p_ij = gamma_ij *
/// exp(-gamma_i. * dt)`, diagonal filled to make each row sum to 1.
pub fn ptm_from_rates(rates: &SwitchRates, dt: f64) -> Result<ProbabilityRows> {
    let n = rates.n;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let exit = rates.exit_rate(i);
        let decay = (-exit * dt).exp();
        let mut off_sum = 0.0;
        for j in 0..n {
            if j != i {
                let v = rates.get(i, j) * decay;
                p[i * n + j] = v;
                off_sum += v;
            }
        }
        if off_sum > 1.0 {
            return Err(Error::InvalidRegime {
                row: i,
                dt,
                mass: off_sum,
            });
        }
        p[i * n + i] = 1.0 - off_sum;
    }
    ProbabilityRows::new(n, p)
}

/// The covariate link `f(w) = 1 / (w^alpha + 1)`, with `f(0) = 1` by
/// continuity of the intended entry-spike semantics. Negative `w` is clamped
/// to zero.
pub fn covariate_link(w: f64, alpha: f64) -> f64 {
    let w = w.max(0.0);
    if w == 0.0 {
        return 1.0;
    }
    1.0 / (w.powf(alpha) + 1.0)
}

/// Switching rates at one covariate value: `gamma_ij = exp(mu_ij + beta_ij *
/// f(w))`.
pub fn rates_from_covariates(params: &CovariateParams, w: f64) -> SwitchRates {
    let n = params.n;
    let f = covariate_link(w, params.alpha);
    let mut rates = SwitchRates::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                rates.set(i, j, (params.mu_at(i, j) + params.beta_at(i, j) * f).exp());
            }
        }
    }
    rates
}

/// Single-step covariate kernel; see [`ptm_from_rates`].
pub fn ptm_from_covariates(params: &CovariateParams, w: f64, dt: f64) -> Result<ProbabilityRows> {
    ptm_from_rates(&rates_from_covariates(params, w), dt)
}

/// Full time-varying kernel for a covariate series; `steps` kernels are
/// produced, one per transition `t -> t + 1` driven by `w[t]`.
pub fn tv_kernels_from_covariates(
    params: &CovariateParams,
    w: &[f64],
    steps: usize,
    dt: f64,
) -> Result<Kernels> {
    let n = params.n;
    let mut p = vec![0.0; steps * n * n];
    fill_tv_kernels(params, w, steps, dt, &mut p)?;
    Ok(Kernels::TimeVarying { n, steps, p })
}

/// Allocation-free body of [`tv_kernels_from_covariates`], used on the
/// sampler's hot path with a reusable buffer.
pub(crate) fn fill_tv_kernels(
    params: &CovariateParams,
    w: &[f64],
    steps: usize,
    dt: f64,
    p: &mut [f64],
) -> Result<()> {
    let n = params.n;
    assert!(w.len() >= steps);
    assert_eq!(p.len(), steps * n * n);
    for (t, &wt) in w.iter().take(steps).enumerate() {
        let f = covariate_link(wt, params.alpha);
        let block = &mut p[t * n * n..(t + 1) * n * n];
        for i in 0..n {
            let mut exit = 0.0;
            for j in 0..n {
                if j != i {
                    let g = (params.mu_at(i, j) + params.beta_at(i, j) * f).exp();
                    block[i * n + j] = g;
                    exit += g;
                }
            }
            let decay = (-exit * dt).exp();
            let mut off_sum = 0.0;
            for j in 0..n {
                if j != i {
                    block[i * n + j] *= decay;
                    off_sum += block[i * n + j];
                }
            }
            if off_sum > 1.0 {
                return Err(Error::InvalidRegime {
                    row: i,
                    dt,
                    mass: off_sum,
                });
            }
            block[i * n + i] = 1.0 - off_sum;
        }
    }
    Ok(())
}

/// Elapsed-time covariate series: `w_t` is the time in seconds since the
/// most recent entrance at or before t. Before the first entrance,
/// `w_t = (t - 1) * dt + initial_wait` so that a large `initial_wait` means
/// "no recent entry".
pub fn covariate_series(
    entrance_times: &[usize],
    t_len: usize,
    dt: f64,
    initial_wait: f64,
    transform: CovariateTransform,
) -> Vec<f64> {
    let mut w = Vec::with_capacity(t_len);
    let mut next = 0usize;
    let mut last: Option<usize> = None;
    for t in 1..=t_len {
        while next < entrance_times.len() && entrance_times[next] <= t {
            last = Some(entrance_times[next]);
            next += 1;
        }
        let elapsed = match last {
            Some(e) => (t - e) as f64 * dt,
            None => (t - 1) as f64 * dt + initial_wait,
        };
        w.push(match transform {
            CovariateTransform::Elapsed => elapsed,
            CovariateTransform::Inverse => {
                if elapsed > 0.0 {
                    1.0 / elapsed
                } else {
                    f64::INFINITY
                }
            }
        });
    }
    w
}

/// The penalty normalizer `c(beta) = (1/T) sum_t exp(beta * f(w_t))`,
/// proportional to the expected number of transitions under the covariate.
pub fn c_normalizer(beta: f64, w: &[f64], alpha: f64) -> f64 {
    assert!(!w.is_empty());
    w.iter()
        .map(|&wt| (beta * covariate_link(wt, alpha)).exp())
        .sum::<f64>()
        / w.len() as f64
}

/// Stationary distribution of an irreducible row-stochastic matrix, by
/// solving `delta P = delta` with the normalization constraint. Reducible
/// matrices (not strongly connected through positive off-diagonal entries)
/// are rejected.
pub fn stationary_distribution(p: &ProbabilityRows) -> Result<Vec<f64>> {
    let n = p.n;
    if !strongly_connected(p) {
        return Err(Error::Reducible);
    }
    // Rows of (P^T - I), with the last equation replaced by sum(delta) = 1.
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = p.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1) * n + j] = 1.0;
    }
    b[n - 1] = 1.0;
    let delta = solve_dense(n, &mut a, &mut b).ok_or(Error::Reducible)?;
    // Residual guard on the accepted output.
    let mut resid: f64 = 0.0;
    for j in 0..n {
        let dp: f64 = (0..n).map(|i| delta[i] * p.get(i, j)).sum();
        resid = resid.max((dp - delta[j]).abs());
    }
    if resid >= 1e-10 || delta.iter().any(|&d| !(d >= -1e-12)) {
        return Err(Error::Numerical(format!(
            "stationary solve residual {resid:.3e}"
        )));
    }
    Ok(delta.into_iter().map(|d| d.max(0.0)).collect())
}

/// Strong connectivity on the graph of positive off-diagonal entries.
fn strongly_connected(p: &ProbabilityRows) -> bool {
    let n = p.n;
    let mut reach = vec![false; n * n];
    for i in 0..n {
        reach[i * n + i] = true;
        for j in 0..n {
            if i != j && p.get(i, j) > 0.0 {
                reach[i * n + j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i * n + k] && reach[k * n + j] {
                    reach[i * n + j] = true;
                }
            }
        }
    }
    reach.iter().all(|&r| r)
}

/// Gaussian elimination with partial pivoting; `None` on a singular system.
fn solve_dense(n: usize, a: &mut [f64], b: &mut [f64]) -> Option<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| {
            a[r * n + col]
                .abs()
                .partial_cmp(&a[s * n + col].abs())
                .unwrap()
        })?;
        if a[pivot * n + col].abs() < 1e-14 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            for j in col..n {
                a[r * n + j] -= f * a[col * n + j];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc -= a[col * n + j] * x[j];
        }
        x[col] = acc / a[col * n + col];
    }
    Some(x)
}
