//! Run configuration: a single TOML file with sections {data, model,
//! penalty, covariate, mcmc, simulate, output}. Every model constant is a
//! named key with the reference analysis' values as defaults, so a default
//! config reproduces the published setup and any deviation is visible in the
//! file. Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use penhmm::{
    CovariateTransform, GammaPrior, Hyperparams, InitValues, McmcSettings, ModelSpec,
    PenaltyFamily, PenaltySpec, TransitionModel,
};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub data: DataSection,
    pub model: ModelSection,
    pub penalty: PenaltySection,
    pub covariate: CovariateSection,
    pub mcmc: McmcSection,
    pub simulate: SimulateSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Event-start CSV (header `start_s`); required for fit and sweep.
    pub events: Option<PathBuf>,
    /// Optional entrance-time CSV (header `entry_s`).
    pub entries: Option<PathBuf>,
    /// Number of one-`dt` bins.
    pub t_len: usize,
    /// Bin width in seconds.
    pub dt: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            events: None,
            entries: None,
            t_len: 14_400,
            dt: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Number of latent states (2 or 3).
    pub states: usize,
    /// "standard" (Dirichlet rows), "penalized" (CTMC rates), or
    /// "covariate".
    pub transition: String,
    pub init: InitSection,
    pub priors: PriorsSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            states: 2,
            transition: "penalized".into(),
            init: InitSection::default(),
            priors: PriorsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSection {
    /// Per-state total emission rates; defaults to (0.007, 0.05, ...).
    pub lambda: Option<Vec<f64>>,
    pub p_stay: f64,
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl Default for InitSection {
    fn default() -> Self {
        Self {
            lambda: None,
            p_stay: 0.997,
            gamma: 0.003,
            beta: 0.0,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorsSection {
    /// Gamma prior on the baseline rate: shape a, rate b.
    pub a: f64,
    pub b: f64,
    /// Gamma prior on the first increment: shape c, rate d.
    pub c: f64,
    pub d: f64,
    /// Gamma prior on the second increment (3-state): shape e, rate f.
    pub e: f64,
    pub f: f64,
    /// Dirichlet weights for the standard model.
    pub theta_diag: f64,
    pub theta_offdiag: f64,
    /// Initial state distribution; uniform when omitted.
    pub pi: Option<Vec<f64>>,
    pub beta_mean: f64,
    pub beta_var: f64,
    pub alpha_mean: f64,
    pub alpha_var: f64,
}

impl Default for PriorsSection {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            c: 1.0,
            d: 1.0,
            e: 1.0,
            f: 1.0,
            theta_diag: 120_000.0,
            theta_offdiag: 1.0,
            pi: None,
            beta_mean: 1.0,
            beta_var: 100.0,
            alpha_mean: 1.0,
            alpha_var: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySection {
    /// "none", "ridge", or "lasso".
    pub family: String,
    /// Tuning parameter; the half-normal variance (ridge) or the
    /// exponential mean (lasso). Default e^-6.
    pub tau: f64,
    /// Sweep grid as log(tau) values.
    pub tau_grid_log: Vec<f64>,
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self {
            family: "ridge".into(),
            tau: (-6.0f64).exp(),
            tau_grid_log: vec![-9.0, -6.0, -3.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovariateSection {
    /// "elapsed" (seconds since last entrance) or "inverse" (its
    /// reciprocal).
    pub transform: String,
    /// Elapsed-time offset before the first entrance.
    pub initial_wait: f64,
}

impl Default for CovariateSection {
    fn default() -> Self {
        Self {
            transform: "elapsed".into(),
            initial_wait: 1e6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub iterations: usize,
    /// Defaults to iterations / 2 when omitted.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for McmcSection {
    fn default() -> Self {
        Self {
            iterations: 50_000,
            burn_in: None,
            thin: 20,
            chains: 1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub t_len: usize,
    /// Per-state total emission rates of the generator.
    pub lambda: Vec<f64>,
    /// Off-diagonal switching rates, row-major (n*(n-1) values); used when
    /// `p_rows` is absent.
    pub gamma: Option<Vec<f64>>,
    /// Explicit transition matrix rows (each summing to 1).
    pub p_rows: Option<Vec<Vec<f64>>>,
    /// Initial state distribution; uniform when omitted.
    pub pi: Option<Vec<f64>>,
    /// Per-second rate of the entrance Poisson process (0 = no entrances).
    pub entrance_rate: f64,
    /// Generator seed; defaults to the mcmc seed.
    pub seed: Option<u64>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            t_len: 14_400,
            lambda: vec![0.0057, 0.0501],
            gamma: Some(vec![0.00142, 0.00422]),
            p_rows: None,
            pi: None,
            entrance_rate: 0.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn burn_in(&self) -> usize {
        self.mcmc.burn_in.unwrap_or(self.mcmc.iterations / 2)
    }

    pub fn mcmc_settings(&self) -> Result<McmcSettings, CliError> {
        McmcSettings::new(self.mcmc.iterations, self.burn_in(), self.mcmc.thin)
            .map_err(CliError::from)
    }

    pub fn penalty_spec(&self) -> Result<PenaltySpec, CliError> {
        let family = match self.penalty.family.as_str() {
            "none" => PenaltyFamily::None,
            "ridge" => PenaltyFamily::Ridge,
            "lasso" => PenaltyFamily::Lasso,
            other => {
                return Err(CliError::Config(format!(
                    "unknown penalty family \"{other}\" (expected none|ridge|lasso)"
                )))
            }
        };
        let spec = PenaltySpec {
            family,
            tau: self.penalty.tau,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tau_grid(&self) -> Result<Vec<f64>, CliError> {
        if self.penalty.tau_grid_log.is_empty() {
            return Err(CliError::Config("penalty.tau_grid_log is empty".into()));
        }
        Ok(self.penalty.tau_grid_log.iter().map(|x| x.exp()).collect())
    }

    fn covariate_transform(&self) -> Result<CovariateTransform, CliError> {
        match self.covariate.transform.as_str() {
            "elapsed" => Ok(CovariateTransform::Elapsed),
            "inverse" => Ok(CovariateTransform::Inverse),
            other => Err(CliError::Config(format!(
                "unknown covariate transform \"{other}\" (expected elapsed|inverse)"
            ))),
        }
    }

    /// Resolve the model sections into the library spec.
    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let n = self.model.states;
        if !(2..=3).contains(&n) {
            return Err(CliError::Config(format!(
                "model.states must be 2 or 3, got {n}"
            )));
        }
        let transition = match self.model.transition.as_str() {
            "standard" => TransitionModel::Dirichlet,
            "penalized" => TransitionModel::Rates {
                penalty: self.penalty_spec()?,
            },
            "covariate" => TransitionModel::Covariate {
                penalty: self.penalty_spec()?,
                transform: self.covariate_transform()?,
                initial_wait: self.covariate.initial_wait,
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown transition model \"{other}\" (expected standard|penalized|covariate)"
                )))
            }
        };

        let p = &self.model.priors;
        let mut lambda_incr = vec![GammaPrior {
            shape: p.c,
            rate: p.d,
        }];
        if n == 3 {
            lambda_incr.push(GammaPrior {
                shape: p.e,
                rate: p.f,
            });
        }
        let mut theta = vec![p.theta_offdiag; n * n];
        for i in 0..n {
            theta[i * n + i] = p.theta_diag;
        }
        let pi0 = match &p.pi {
            Some(pi) => pi.clone(),
            None => vec![1.0 / n as f64; n],
        };
        let hyper = Hyperparams {
            lambda_base: GammaPrior {
                shape: p.a,
                rate: p.b,
            },
            lambda_incr,
            theta,
            pi0,
            beta_prior: (p.beta_mean, p.beta_var),
            alpha_prior: (p.alpha_mean, p.alpha_var),
        };

        let defaults = InitValues::defaults(n);
        let init = InitValues {
            lambda_totals: self
                .model
                .init
                .lambda
                .clone()
                .unwrap_or(defaults.lambda_totals),
            p_stay: self.model.init.p_stay,
            gamma: self.model.init.gamma,
            beta: self.model.init.beta,
            alpha: self.model.init.alpha,
        };

        Ok(ModelSpec {
            n_states: n,
            transition,
            hyper,
            init,
        })
    }
}
