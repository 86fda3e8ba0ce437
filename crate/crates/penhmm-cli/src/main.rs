//! Command-line driver: fit a model to an event-count series, sweep the
//! penalty tuning parameter, generate synthetic datasets, or run the
//! built-in numerical self-checks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

mod config;
mod ingest;
mod oracle;
mod output;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use penhmm::chain::{ptm_from_rates, Kernels, ProbabilityRows};
use penhmm::simulate::{simulate_entrances, simulate_series};
use penhmm::{run_chains, tau_sweep, CountSeries, EmissionParams, SwitchRates};

use config::Config;
use output::{emit_outputs, emit_simulation, write_manifest, Manifest};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<penhmm::Error> for CliError {
    fn from(e: penhmm::Error) -> Self {
        match e {
            penhmm::Error::Config(_) => CliError::Config(e.to_string()),
            penhmm::Error::InvalidData(_) => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "penhmm",
    version,
    about = "Penalized Poisson hidden Markov models for event-count time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and write draws, state probabilities, and a summary
    Fit(RunArgs),
    /// Fit the penalized model across the tau grid and tabulate MSPE
    Sweep(RunArgs),
    /// Generate a synthetic dataset in the ingestible CSV schema
    Simulate(RunArgs),
    /// Run the built-in numerical self-checks
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the configured RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for chains and sweep points (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => run_with_config("fit", args),
        Command::Sweep(args) => run_with_config("sweep", args),
        Command::Simulate(args) => run_with_config("simulate", args),
        Command::OracleCheck(args) => {
            configure_threads(args.threads);
            oracle::run_oracle_check(args.seed)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("penhmm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(k) = threads {
        // Ignore the error if a pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    if threads.is_some() {
        eprintln!("penhmm: built without the parallel feature; --threads ignored");
    }
}

fn run_with_config(command: &str, args: RunArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = Config::from_toml(&text)?;
    if let Some(seed) = args.seed {
        cfg.mcmc.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output.dir = out;
    }
    configure_threads(args.threads);

    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;

    let started = Instant::now();
    let (outputs, argmin_tau) = match command {
        "fit" => (run_fit(&cfg, &dir)?, None),
        "sweep" => run_sweep(&cfg, &dir)?,
        "simulate" => (run_simulate(&cfg, &dir)?, None),
        _ => unreachable!(),
    };

    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.mcmc.seed,
        threads: args.threads,
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs,
        argmin_tau,
        config: cfg.to_toml(),
    };
    write_manifest(&dir, &manifest)?;
    Ok(())
}

fn load_data(cfg: &Config) -> Result<CountSeries, CliError> {
    let events = cfg
        .data
        .events
        .as_ref()
        .ok_or_else(|| CliError::Config("data.events is required for this command".into()))?;
    ingest::ingest_events(
        events,
        cfg.data.entries.as_deref(),
        cfg.data.t_len,
        cfg.data.dt,
    )
}

fn run_fit(cfg: &Config, dir: &Path) -> Result<Vec<String>, CliError> {
    let data = load_data(cfg)?;
    let spec = cfg.model_spec()?;
    let mcmc = cfg.mcmc_settings()?;
    let sample = run_chains(&spec, &data, &mcmc, cfg.mcmc.seed, cfg.mcmc.chains)?;
    let files = emit_outputs(&sample, &data, cfg, dir)?;
    println!(
        "fit: {} states, {} retained draws, accept rate {:.3}",
        sample.n_states,
        sample.draws.len(),
        sample.accept_rate
    );
    Ok(files)
}

fn run_sweep(cfg: &Config, dir: &Path) -> Result<(Vec<String>, Option<f64>), CliError> {
    let data = load_data(cfg)?;
    let template = cfg.model_spec()?;
    let mcmc = cfg.mcmc_settings()?;
    let grid = cfg.tau_grid()?;
    let table = tau_sweep(
        &template,
        &data,
        &mcmc,
        &grid,
        cfg.mcmc.chains,
        cfg.mcmc.seed,
    )?;
    for (tau, msg) in &table.failures {
        eprintln!("penhmm: sweep point tau = {tau} failed: {msg}");
    }
    output::write_atomic(&dir.join("sweep.csv"), table.to_delimited().as_bytes())?;
    print!("{}", table.to_delimited());
    let argmin = table.argmin_row().map(|r| r.tau);
    match argmin {
        Some(tau) => println!("argmin tau = {tau}"),
        None => println!("argmin tau: none (all grid points failed)"),
    }
    Ok((vec!["sweep.csv".to_string()], argmin))
}

fn run_simulate(cfg: &Config, dir: &Path) -> Result<Vec<String>, CliError> {
    let sim = &cfg.simulate;
    let n = sim.lambda.len();
    if !(2..=3).contains(&n) {
        return Err(CliError::Config(
            "simulate.lambda needs 2 or 3 state totals".into(),
        ));
    }
    let emission = EmissionParams::from_totals(&sim.lambda).map_err(CliError::from)?;
    let kernels = match (&sim.p_rows, &sim.gamma) {
        (Some(rows), _) => {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            Kernels::Constant(ProbabilityRows::normalized(n, flat).map_err(CliError::from)?)
        }
        (None, Some(gamma)) => {
            if gamma.len() != n * (n - 1) {
                return Err(CliError::Config(format!(
                    "simulate.gamma needs {} off-diagonal rates",
                    n * (n - 1)
                )));
            }
            let mut rates = SwitchRates::zeros(n);
            let mut it = gamma.iter();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        rates.set(i, j, *it.next().expect("sized above"));
                    }
                }
            }
            Kernels::Constant(ptm_from_rates(&rates, cfg.data.dt).map_err(CliError::from)?)
        }
        (None, None) => {
            return Err(CliError::Config(
                "simulate needs either gamma or p_rows".into(),
            ))
        }
    };
    let pi0 = match &sim.pi {
        Some(pi) => pi.clone(),
        None => vec![1.0 / n as f64; n],
    };
    let seed = sim.seed.unwrap_or(cfg.mcmc.seed);
    let (mut data, path) =
        simulate_series(&emission, &kernels, &pi0, sim.t_len, cfg.data.dt, seed)
            .map_err(CliError::from)?;
    if sim.entrance_rate > 0.0 {
        data.entrance_times = Some(simulate_entrances(
            sim.entrance_rate,
            sim.t_len,
            seed.wrapping_add(1),
        ));
    }
    let files = emit_simulation(&data, &path, dir)?;
    println!(
        "simulate: T = {}, {} events, {} true switches",
        sim.t_len,
        data.total_events(),
        penhmm::model::switch_count(&path)
    );
    Ok(files)
}
