//! Bayesian penalized Poisson hidden Markov models for high-resolution
//! event-count time series.
//!
//! The crate fits three related models to per-second event counts:
//!
//! * a standard Poisson HMM with Dirichlet priors on the rows of the
//!   transition probability matrix,
//! * a penalized HMM in which transition probabilities are derived from
//!   continuous-time Markov chain switching rates carrying half-normal
//!   (ridge) or exponential (LASSO) shrinkage priors, and
//! * a covariate-driven variant in which the log switching rates respond to
//!   the time elapsed since an external event (e.g. a forager entering the
//!   observation chamber).
//!
//! Inference is MCMC: forward-filtering backward-sampling for the latent
//! state path, conjugate Gibbs updates for emission rates and Dirichlet rows,
//! and adaptive random-walk Metropolis-Hastings on log switching rates. The
//! tuning parameter of the shrinkage prior is selected by one-step-ahead
//! posterior-predictive mean squared prediction error ([`selection::tau_sweep`]).
//!
//! Chains are deterministic given a seed. Parallelism (enabled by the
//! default `parallel` feature) runs across independent chains and sweep grid
//! points only; a single chain is always sequential.

// Negated float comparisons like `!(x > 0.0)` are deliberate: they treat
// NaN as invalid input instead of letting it slip through a `<=` rewrite.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod emission;
pub mod exec;
pub mod model;
pub mod sampler;
pub mod selection;
pub mod simulate;
pub mod stats;

pub use chain::{Kernels, ProbabilityRows};
pub use model::{
    CountSeries, CovariateParams, CovariateTransform, EmissionParams, GammaPrior, Hyperparams,
    InitValues, McmcSettings, ModelSpec, ParamState, ParamSummary, PenaltyFamily, PenaltySpec,
    PosteriorSample, SwitchRates, TransitionModel, TransitionParams,
};
pub use sampler::{run_chain, run_chains, run_chains_serial, ForwardMatrix, MhAdapter};
pub use selection::{mspe, tau_sweep, SweepRow, SweepTable};

/// Errors surfaced by model construction, kernel building, and sampling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data violates an invariant (counts, entrance times, lengths).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Model specification is internally inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Switching rates too large for the bin width: an off-diagonal row sum
    /// of the derived transition matrix would exceed 1.
    #[error("invalid rate regime for dt = {dt}: row {row} has off-diagonal mass {mass:.6}")]
    InvalidRegime { row: usize, dt: f64, mass: f64 },

    /// Transition matrix is reducible; no unique stationary distribution.
    #[error("transition matrix is reducible; stationary distribution is not unique")]
    Reducible,

    /// Exhaustive path enumeration was requested beyond the size cap.
    #[error("state space too large to enumerate: {paths:.3e} paths exceeds cap {cap:.3e}")]
    TooLarge { paths: f64, cap: f64 },

    /// A 1-d grid posterior left non-negligible mass at its boundary.
    #[error("grid does not cover the target support: boundary mass {mass:.3e}")]
    SupportNotCovered { mass: f64 },

    /// Numerical failure (underflow, singular solve, residual too large).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
