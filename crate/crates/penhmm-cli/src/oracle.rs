//! The `oracle-check` verb: a fast battery of the independent numerical
//! oracles against the production code paths. Prints one line per check and
//! fails with a numerical-error exit code if anything disagrees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use penhmm::chain::{
    is_valid_ptm_regime, ptm_from_rates, stationary_distribution, ProbabilityRows,
};
use penhmm::emission::update_emission_rates;
use penhmm::model::{EmissionParams, Hyperparams, SwitchRates};
use penhmm::sampler::{backward_sample, forward_filter};
use penhmm::simulate::{enumerate_path_posterior, grid_posterior_1d, simulate_series, GridSpec};
use penhmm::Kernels;

use crate::CliError;

struct Checker {
    failures: usize,
}

impl Checker {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("oracle-check: {name}: {} ({detail})", if ok { "ok" } else { "FAILED" });
        if !ok {
            self.failures += 1;
        }
    }
}

pub fn run_oracle_check(seed: u64) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xa11ce));
    let mut c = Checker { failures: 0 };

    // FFBS against exhaustive enumeration.
    let mut worst_ev = 0.0f64;
    let mut worst_marg = 0.0f64;
    for instance in 0..5 {
        let t_len = 4 + 2 * instance;
        let p11 = 0.6 + 0.35 * rng.random::<f64>();
        let p22 = 0.6 + 0.35 * rng.random::<f64>();
        let kernels = Kernels::Constant(
            ProbabilityRows::new(2, vec![p11, 1.0 - p11, 1.0 - p22, p22]).unwrap(),
        );
        let low = 0.1 + rng.random::<f64>();
        let emission = EmissionParams::from_totals(&[low, low + 1.0]).unwrap();
        let pi0 = [0.5, 0.5];
        let (data, _) =
            simulate_series(&emission, &kernels, &pi0, t_len, 1.0, seed + instance as u64)
                .map_err(CliError::from)?;
        let (marg, log_ev) = enumerate_path_posterior(&data.counts, &emission, &kernels, &pi0)
            .map_err(CliError::from)?;
        let fwd = forward_filter(&data.counts, &emission, &kernels, &pi0)
            .map_err(CliError::from)?;
        worst_ev = worst_ev.max((fwd.log_likelihood() - log_ev).abs());
        let reps = 20_000;
        let mut freq = vec![0u32; t_len];
        for _ in 0..reps {
            for (t, &x) in backward_sample(&fwd, &kernels, &mut rng).iter().enumerate() {
                if x == 2 {
                    freq[t] += 1;
                }
            }
        }
        for t in 0..t_len {
            let p = marg[2 * t + 1];
            let se = (p * (1.0 - p) / reps as f64).sqrt().max(2e-4);
            worst_marg = worst_marg.max((f64::from(freq[t]) / reps as f64 - p).abs() / se);
        }
    }
    c.check(
        "ffbs vs enumeration",
        worst_ev < 1e-8 && worst_marg < 4.0,
        format!("log-evidence gap {worst_ev:.1e}, worst marginal z {worst_marg:.2}"),
    );

    // Conjugate emission update against the closed-form Gamma.
    let t_len = 1000;
    let path = vec![1u8; t_len];
    let mut aug = vec![0u32; 2 * t_len];
    for t in 0..8 {
        aug[t * 100] = 1;
    }
    let hyper = Hyperparams::defaults(2);
    let reps = 20_000;
    let mut mean = 0.0;
    for _ in 0..reps {
        mean += update_emission_rates(&aug, &path, &hyper, &mut rng).lambda_base;
    }
    mean /= reps as f64;
    let (shape, rate) = (9.0, 1001.0);
    let z = (mean - shape / rate).abs() / (shape / (rate * rate) / reps as f64).sqrt();
    c.check(
        "conjugate gamma update",
        z < 4.0,
        format!("posterior-mean z {z:.2}"),
    );

    // Grid oracle self-consistency on a known Gamma target.
    let grid = grid_posterior_1d(
        |x| 10.0 * x.ln() - 1000.0 * x,
        &GridSpec::open(1e-7, 0.05, 4001),
    )
    .map_err(CliError::from)?;
    let gap = (grid.mean() - 11.0 / 1000.0).abs();
    c.check("grid posterior moments", gap < 1e-6, format!("mean gap {gap:.1e}"));

    // Validity theorem at dt = 1 and rejection below exp(-1).
    let mut all_valid = true;
    for _ in 0..2000 {
        let flat: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 100.0).collect();
        let rates = SwitchRates::from_flat(2, flat).unwrap();
        if !is_valid_ptm_regime(&rates, 1.0) || ptm_from_rates(&rates, 1.0).is_err() {
            all_valid = false;
        }
    }
    let rejected = !is_valid_ptm_regime(&SwitchRates::uniform(2, 10.0), 0.1);
    c.check(
        "ptm validity regime",
        all_valid && rejected,
        format!("dt=1 valid {all_valid}, dt=0.1 rejects {rejected}"),
    );

    // Stationary distributions of the reported matrices.
    let p2 = ProbabilityRows::normalized(2, vec![0.9986, 0.0014, 0.0042, 0.9958]).unwrap();
    let d2 = stationary_distribution(&p2).map_err(CliError::from)?;
    let ok2 = (d2[0] - 0.75).abs() < 0.01;
    let p3 = ProbabilityRows::normalized(
        3,
        vec![
            0.9975, 0.0010, 0.0015, 0.0063, 0.7611, 0.2327, 0.0046, 0.2243, 0.7711,
        ],
    )
    .unwrap();
    let d3 = stationary_distribution(&p3).map_err(CliError::from)?;
    let ok3 = (d3[0] - 0.684).abs() < 0.01 && (d3[1] - 0.153).abs() < 0.01;
    c.check(
        "stationary distributions",
        ok2 && ok3,
        format!("two-state ({:.3}, {:.3}), three-state ({:.3}, {:.3}, {:.3})", d2[0], d2[1], d3[0], d3[1], d3[2]),
    );

    if c.failures > 0 {
        Err(CliError::Numerical(format!(
            "{} oracle check(s) failed",
            c.failures
        )))
    } else {
        println!("oracle-check: all checks passed");
        Ok(())
    }
}
