//! Shared domain types and their invariants. No algorithms live here; the
//! sampling and kernel machinery is in [`crate::emission`], [`crate::chain`],
//! and [`crate::sampler`].
//!
//! States are numbered `1..=n` (the two-state labels L/H map to 1/2). Latent
//! paths are stored as `u8` state labels; matrices are flat row-major
//! `Vec<f64>` since every model in scope uses `n <= 3`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chain::ProbabilityRows;
use crate::{Error, Result};

/// Per-second event counts with optional covariate bookkeeping.
///
/// `counts[t]` holds the number of events whose start fell in bin `t + 1`
/// (bins are 1-based in the model convention, storage is 0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    pub counts: Vec<u32>,
    /// Bin width in seconds.
    pub dt: f64,
    /// Strictly increasing 1-based bin indices of chamber entrances, when
    /// the covariate model is in play.
    pub entrance_times: Option<Vec<usize>>,
}

impl CountSeries {
    pub fn new(counts: Vec<u32>, dt: f64, entrance_times: Option<Vec<usize>>) -> Result<Self> {
        let s = Self {
            counts,
            dt,
            entrance_times,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.len() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 bins, got {}",
                self.counts.len()
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidData(format!("dt must be > 0, got {}", self.dt)));
        }
        if let Some(times) = &self.entrance_times {
            for (i, &t) in times.iter().enumerate() {
                if t < 1 || t > self.counts.len() {
                    return Err(Error::InvalidData(format!(
                        "entrance time {t} outside [1, {}]",
                        self.counts.len()
                    )));
                }
                if i > 0 && times[i - 1] >= t {
                    return Err(Error::InvalidData(
                        "entrance times must be strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn t_len(&self) -> usize {
        self.counts.len()
    }

    pub fn total_events(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Emission rates in the identifiable base-plus-increments parameterization:
/// the state-k total rate is `lambda_base + lambda_incr[..k-1].sum()`, which
/// is non-decreasing in k by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionParams {
    pub lambda_base: f64,
    pub lambda_incr: Vec<f64>,
}

impl EmissionParams {
    pub fn new(lambda_base: f64, lambda_incr: Vec<f64>) -> Result<Self> {
        let e = Self {
            lambda_base,
            lambda_incr,
        };
        e.validate()?;
        Ok(e)
    }

    /// Build from per-state total rates, which must be non-decreasing.
    pub fn from_totals(totals: &[f64]) -> Result<Self> {
        if totals.is_empty() {
            return Err(Error::InvalidData("no emission rates given".into()));
        }
        let incr = totals.windows(2).map(|w| w[1] - w[0]).collect();
        Self::new(totals[0], incr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_base > 0.0) {
            return Err(Error::InvalidData(format!(
                "lambda_base must be > 0, got {}",
                self.lambda_base
            )));
        }
        if self.lambda_incr.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidData("emission increments must be >= 0".into()));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.lambda_incr.len() + 1
    }

    /// Rate of the k-th additive component (0-based): base for k = 0,
    /// increment k otherwise.
    pub fn component_rate(&self, k: usize) -> f64 {
        if k == 0 {
            self.lambda_base
        } else {
            self.lambda_incr[k - 1]
        }
    }

    /// Total emission rate in state `state` (1-based).
    pub fn total_rate(&self, state: usize) -> f64 {
        debug_assert!(state >= 1 && state <= self.n_states());
        self.lambda_base + self.lambda_incr[..state - 1].iter().sum::<f64>()
    }

    /// Per-state total rates, indexed by state - 1.
    pub fn state_rates(&self) -> Vec<f64> {
        (1..=self.n_states()).map(|k| self.total_rate(k)).collect()
    }
}

/// CTMC switching rates: `gamma[(i, j)]` is the rate of moving from state i
/// to state j per second. The diagonal is unused and kept at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchRates {
    pub n: usize,
    gamma: Vec<f64>,
}

impl SwitchRates {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            gamma: vec![0.0; n * n],
        }
    }

    /// Uniform off-diagonal rate, the usual initialization.
    pub fn uniform(n: usize, rate: f64) -> Self {
        let mut s = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s.set(i, j, rate);
                }
            }
        }
        s
    }

    pub fn from_flat(n: usize, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != n * n {
            return Err(Error::InvalidData("rate matrix has wrong size".into()));
        }
        let mut s = Self { n, gamma };
        for i in 0..n {
            s.gamma[i * n + i] = 0.0;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && !(self.get(i, j) >= 0.0) {
                    return Err(Error::InvalidData(format!(
                        "switch rate ({i},{j}) must be >= 0, got {}",
                        self.get(i, j)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Entry (i, j), 0-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if i != j {
            self.gamma[i * self.n + j] = v;
        }
    }

    /// Row exit rate: sum of off-diagonal entries in row i.
    pub fn exit_rate(&self, i: usize) -> f64 {
        (0..self.n)
            .filter(|&j| j != i)
            .map(|j| self.get(i, j))
            .sum()
    }

    /// Off-diagonal entries in row-major order, with their indices.
    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| {
            (0..n)
                .filter(move |&j| j != i)
                .map(move |j| (i, j, self.get(i, j)))
        })
    }
}

/// Parameters of the covariate-driven switching model:
/// `gamma_ijt = exp(mu[(i,j)] + beta[(i,j)] * f(w_t))` with
/// `f(w) = 1 / (w^alpha + 1)`. Diagonals of `mu` and `beta` are unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateParams {
    pub n: usize,
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub alpha: f64,
}

impl CovariateParams {
    pub fn constant(n: usize, mu: f64, beta: f64, alpha: f64) -> Self {
        Self {
            n,
            mu: vec![mu; n * n],
            beta: vec![beta; n * n],
            alpha,
        }
    }

    pub fn mu_at(&self, i: usize, j: usize) -> f64 {
        self.mu[i * self.n + j]
    }

    pub fn beta_at(&self, i: usize, j: usize) -> f64 {
        self.beta[i * self.n + j]
    }
}

/// Shrinkage prior family on switching rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyFamily {
    /// No shrinkage: flat prior on log rates.
    None,
    /// Half-normal prior with density proportional to `exp(-gamma^2 / (2 tau))`.
    /// `tau` is the *variance* of the underlying normal.
    Ridge,
    /// Exponential prior with mean `tau`.
    Lasso,
}

/// Penalty family plus its tuning parameter. Smaller `tau` means stronger
/// shrinkage toward slow switching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    pub tau: f64,
}

impl PenaltySpec {
    pub fn none() -> Self {
        Self {
            family: PenaltyFamily::None,
            tau: 1.0,
        }
    }

    pub fn ridge(tau: f64) -> Self {
        Self {
            family: PenaltyFamily::Ridge,
            tau,
        }
    }

    pub fn lasso(tau: f64) -> Self {
        Self {
            family: PenaltyFamily::Lasso,
            tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.family != PenaltyFamily::None && !(self.tau > 0.0) {
            return Err(Error::Config(format!(
                "penalty tau must be > 0, got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Log prior density of one rate, up to constants not depending on it.
    pub fn log_prior(&self, gamma: f64) -> f64 {
        match self.family {
            // Flat on the log scale, i.e. proportional to 1/gamma.
            PenaltyFamily::None => -gamma.ln(),
            PenaltyFamily::Ridge => -gamma * gamma / (2.0 * self.tau),
            PenaltyFamily::Lasso => -gamma / self.tau,
        }
    }
}

/// Shape/rate Gamma prior (mean = shape / rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn unit() -> Self {
        Self {
            shape: 1.0,
            rate: 1.0,
        }
    }
}

/// All fixed prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Prior on the baseline emission rate (shape a, rate b).
    pub lambda_base: GammaPrior,
    /// Priors on each emission increment (c, d and e, f in the 3-state case).
    pub lambda_incr: Vec<GammaPrior>,
    /// Dirichlet weights for the standard model, n x n row-major.
    pub theta: Vec<f64>,
    /// Initial-state distribution folded into the first forward step.
    pub pi0: Vec<f64>,
    /// Normal prior (mean, variance) on each covariate coefficient.
    pub beta_prior: (f64, f64),
    /// Normal prior (mean, variance) on the decay exponent.
    pub alpha_prior: (f64, f64),
}

impl Hyperparams {
    /// Paper defaults: unit Gamma priors, near-degenerate sticky Dirichlet
    /// weights (120000 on the diagonal), uniform initial distribution, and
    /// N(1, 100) / N(1, 10) priors on beta and alpha.
    pub fn defaults(n: usize) -> Self {
        let mut theta = vec![1.0; n * n];
        for i in 0..n {
            theta[i * n + i] = 120_000.0;
        }
        Self {
            lambda_base: GammaPrior::unit(),
            lambda_incr: vec![GammaPrior::unit(); n.saturating_sub(1)],
            theta,
            pi0: vec![1.0 / n as f64; n],
            beta_prior: (1.0, 100.0),
            alpha_prior: (1.0, 10.0),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.lambda_base.shape > 0.0 && self.lambda_base.rate > 0.0) {
            return Err(Error::Config("lambda_base prior must be positive".into()));
        }
        if self.lambda_incr.len() != n - 1 {
            return Err(Error::Config(format!(
                "need {} increment priors for {} states, got {}",
                n - 1,
                n,
                self.lambda_incr.len()
            )));
        }
        for g in &self.lambda_incr {
            if !(g.shape > 0.0 && g.rate > 0.0) {
                return Err(Error::Config("increment prior must be positive".into()));
            }
        }
        if self.theta.len() != n * n || self.theta.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Config(
                "theta must be an n x n matrix of positive weights".into(),
            ));
        }
        if self.pi0.len() != n {
            return Err(Error::Config("pi0 must have one entry per state".into()));
        }
        let total: f64 = self.pi0.iter().sum();
        if self.pi0.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config("pi0 must be a probability vector".into()));
        }
        if !(self.beta_prior.1 > 0.0 && self.alpha_prior.1 > 0.0) {
            return Err(Error::Config("prior variances must be > 0".into()));
        }
        Ok(())
    }
}

/// How the elapsed-time covariate enters `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateTransform {
    /// `w_t` = seconds since the most recent entrance (0 at an entrance).
    Elapsed,
    /// `w_t` = 1 / seconds since the most recent entrance. Provided for the
    /// alternative reading of the covariate definition; `Elapsed` is the
    /// default and the one whose behavior matches the "drops to zero on
    /// entry" description.
    Inverse,
}

/// Which transition-parameter block the sampler updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TransitionModel {
    /// Standard model: Dirichlet-prior rows, conjugate Gibbs updates.
    Dirichlet,
    /// Penalized model: CTMC rates with a shrinkage prior, MH updates.
    Rates { penalty: PenaltySpec },
    /// Covariate-driven time-varying rates, joint MH updates.
    Covariate {
        penalty: PenaltySpec,
        transform: CovariateTransform,
        /// Offset added to the elapsed time before the first entrance
        /// ("no recent entry"); large by default.
        initial_wait: f64,
    },
}

/// Starting values for a chain. All fields are overridable; the defaults are
/// the reference analysis' published starting values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitValues {
    /// Per-state total emission rates.
    pub lambda_totals: Vec<f64>,
    /// Diagonal of the initial transition matrix (standard model).
    pub p_stay: f64,
    /// Initial off-diagonal switching rate (penalized model).
    pub gamma: f64,
    /// Initial covariate coefficient.
    pub beta: f64,
    /// Initial decay exponent.
    pub alpha: f64,
}

impl InitValues {
    /// Paper defaults: P rows from (0.997, 0.003), lambda totals starting at
    /// (0.007, 0.05) and continuing in equal increments, gamma = 0.003
    /// (matching the same off-diagonal probability scale), beta = 0,
    /// alpha = 1.
    pub fn defaults(n: usize) -> Self {
        let lambda_totals = match n {
            2 => vec![0.007, 0.05],
            3 => vec![0.007, 0.05, 0.093],
            _ => (0..n).map(|k| 0.007 + 0.043 * k as f64).collect(),
        };
        Self {
            lambda_totals,
            p_stay: 0.997,
            gamma: 0.003,
            beta: 0.0,
            alpha: 1.0,
        }
    }
}

/// Complete model specification: state count, transition block, priors, and
/// starting values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_states: usize,
    pub transition: TransitionModel,
    pub hyper: Hyperparams,
    pub init: InitValues,
}

impl ModelSpec {
    pub fn new(n_states: usize, transition: TransitionModel) -> Self {
        Self {
            n_states,
            transition,
            hyper: Hyperparams::defaults(n_states),
            init: InitValues::defaults(n_states),
        }
    }

    /// Standard-model defaults; for two states pi0 is (0.5, 0.5).
    pub fn standard(n_states: usize) -> Self {
        Self::new(n_states, TransitionModel::Dirichlet)
    }

    pub fn penalized(n_states: usize, penalty: PenaltySpec) -> Self {
        Self::new(n_states, TransitionModel::Rates { penalty })
    }

    pub fn covariate(n_states: usize, penalty: PenaltySpec) -> Self {
        Self::new(
            n_states,
            TransitionModel::Covariate {
                penalty,
                transform: CovariateTransform::Elapsed,
                initial_wait: 1e6,
            },
        )
    }

    pub fn validate(&self, data: &CountSeries) -> Result<()> {
        if self.n_states < 2 {
            return Err(Error::Config(format!(
                "need at least 2 states, got {}",
                self.n_states
            )));
        }
        if self.n_states > u8::MAX as usize {
            return Err(Error::Config("too many states".into()));
        }
        self.hyper.validate(self.n_states)?;
        if self.init.lambda_totals.len() != self.n_states {
            return Err(Error::Config(
                "initial lambda totals must have one entry per state".into(),
            ));
        }
        EmissionParams::from_totals(&self.init.lambda_totals)
            .map_err(|_| Error::Config("initial lambda totals must be non-decreasing".into()))?;
        match &self.transition {
            TransitionModel::Dirichlet => {}
            TransitionModel::Rates { penalty } => penalty.validate()?,
            TransitionModel::Covariate {
                penalty,
                initial_wait,
                ..
            } => {
                penalty.validate()?;
                if data.entrance_times.is_none() {
                    return Err(Error::Config(
                        "covariate model requires entrance times in the data".into(),
                    ));
                }
                if !(*initial_wait >= 0.0) {
                    return Err(Error::Config("initial_wait must be >= 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// MCMC run lengths. `thin` strides over post-burn-in iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl McmcSettings {
    pub fn new(iterations: usize, burn_in: usize, thin: usize) -> Result<Self> {
        let s = Self {
            iterations,
            burn_in,
            thin,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Transition parameters of one draw, matching the model variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TransitionParams {
    Probabilities(ProbabilityRows),
    Rates(SwitchRates),
    Covariate(CovariateParams),
}

/// One MCMC draw: emission rates, transition block, latent path, and the
/// augmented per-component counts.
///
/// Invariants: path values lie in `1..=n`; `augmented_counts` is n x T
/// row-major (component-major) with column sums equal to the data counts and
/// zeros above the path state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub emission: EmissionParams,
    pub transitions: TransitionParams,
    pub path: Vec<u8>,
    pub augmented_counts: Vec<u32>,
}

impl ParamState {
    pub fn n_states(&self) -> usize {
        self.emission.n_states()
    }

    /// Number of t with `X_t != X_{t+1}`.
    pub fn switch_count(&self) -> usize {
        switch_count(&self.path)
    }

    pub fn validate(&self, counts: &[u32]) -> Result<()> {
        let n = self.n_states();
        let t_len = self.path.len();
        if counts.len() != t_len || self.augmented_counts.len() != n * t_len {
            return Err(Error::InvalidData("draw dimensions disagree".into()));
        }
        for (t, &x) in self.path.iter().enumerate() {
            if x < 1 || usize::from(x) > n {
                return Err(Error::InvalidData(format!("path state {x} at t={t}")));
            }
            let mut sum = 0u64;
            for k in 0..n {
                let v = self.augmented_counts[k * t_len + t];
                if k >= usize::from(x) && v != 0 {
                    return Err(Error::InvalidData(format!(
                        "augmented count above the path state at t={t}"
                    )));
                }
                sum += u64::from(v);
            }
            if sum != u64::from(counts[t]) {
                return Err(Error::InvalidData(format!(
                    "augmented counts at t={t} sum to {sum}, expected {}",
                    counts[t]
                )));
            }
        }
        Ok(())
    }
}

/// Switches in a path: number of t with `X_t != X_{t+1}`.
pub fn switch_count(path: &[u8]) -> usize {
    path.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Posterior mean and equal-tailed 95% interval for one scalar, with the
/// effective sample size as a mixing diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub ess: f64,
}

/// Thinned post-burn-in draws plus per-time-step state marginals and scalar
/// summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub n_states: usize,
    pub t_len: usize,
    pub draws: Vec<ParamState>,
    /// Iteration number of each retained draw.
    pub iterations: Vec<usize>,
    /// T x n row-major; entry (t, k) is the posterior probability of state
    /// k + 1 at time t + 1, estimated over retained draws.
    pub state_marginals: Vec<f64>,
    pub summaries: BTreeMap<String, ParamSummary>,
    /// MH acceptance rate over post-burn-in iterations (1 for the all-Gibbs
    /// standard model).
    pub accept_rate: f64,
}

impl PosteriorSample {
    pub fn marginal(&self, t: usize, state: usize) -> f64 {
        self.state_marginals[t * self.n_states + (state - 1)]
    }

    /// Posterior modal state (1-based) at each time step.
    pub fn modal_path(&self) -> Vec<u8> {
        (0..self.t_len)
            .map(|t| {
                let row = &self.state_marginals[t * self.n_states..(t + 1) * self.n_states];
                let mut best = 0;
                for k in 1..self.n_states {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                (best + 1) as u8
            })
            .collect()
    }

    /// Mean number of path switches over retained draws.
    pub fn mean_switches(&self) -> f64 {
        if self.draws.is_empty() {
            return 0.0;
        }
        self.draws
            .iter()
            .map(|d| d.switch_count() as f64)
            .sum::<f64>()
            / self.draws.len() as f64
    }

    /// Scalar parameter values of one draw, in a stable name order. The
    /// emission block reports per-state total rates.
    pub fn scalar_params(draw: &ParamState) -> Vec<(String, f64)> {
        let n = draw.n_states();
        let mut out = Vec::new();
        for (k, rate) in draw.emission.state_rates().into_iter().enumerate() {
            out.push((format!("lambda_{}", k + 1), rate));
        }
        match &draw.transitions {
            TransitionParams::Probabilities(p) => {
                for i in 0..n {
                    for j in 0..n {
                        out.push((format!("p_{}{}", i + 1, j + 1), p.get(i, j)));
                    }
                }
            }
            TransitionParams::Rates(g) => {
                for (i, j, v) in g.off_diagonal() {
                    out.push((format!("gamma_{}{}", i + 1, j + 1), v));
                }
            }
            TransitionParams::Covariate(c) => {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            out.push((format!("mu_{}{}", i + 1, j + 1), c.mu_at(i, j)));
                            out.push((format!("beta_{}{}", i + 1, j + 1), c.beta_at(i, j)));
                        }
                    }
                }
                out.push(("alpha".into(), c.alpha));
            }
        }
        out
    }
}
