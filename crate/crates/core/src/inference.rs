//! Nonparametric bootstrap for scalar (or vector) estimators.
//!
//! Every replicate resamples rows with replacement and calls the estimator
//! closure, which is expected to refit its own nuisance models. Replicate
//! `r` draws from its own ChaCha stream `r`, so results do not depend on
//! how replicates are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::stats::{normal_quantile, quantile_sorted, sample_sd, two_sided_pvalue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub ci_level: f64,
    pub seed: u64,
    /// Extra attempts for a replicate whose estimator fails.
    pub max_redraws: usize,
    /// Percentile interval instead of `estimate +- z se`.
    pub percentile: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_boot: 500,
            ci_level: 0.95,
            seed: 0,
            max_redraws: 100,
            percentile: false,
        }
    }
}

impl BootstrapConfig {
    pub fn new(n_boot: usize, seed: u64) -> Self {
        Self {
            n_boot,
            seed,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.n_boot < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 bootstrap replicates, got {}",
                self.n_boot
            )));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence level must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub pvalue: f64,
    pub n_failed: usize,
}

/// RNG for stream `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn resample_indices(rng: &mut ChaCha20Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Summary of a point estimate and its replicate values.
pub fn summarize(estimate: f64, reps: &[f64], n_failed: usize, cfg: &BootstrapConfig) -> BootstrapResult {
    let se = sample_sd(reps);
    let alpha = 1.0 - cfg.ci_level;
    let (ci_lo, ci_hi) = if cfg.percentile {
        let mut sorted = reps.to_vec();
        sorted.sort_by(f64::total_cmp);
        (
            quantile_sorted(&sorted, alpha / 2.0),
            quantile_sorted(&sorted, 1.0 - alpha / 2.0),
        )
    } else {
        let z = normal_quantile(1.0 - alpha / 2.0);
        (estimate - z * se, estimate + z * se)
    };
    let pvalue = if se > 0.0 {
        two_sided_pvalue(estimate / se)
    } else if estimate == 0.0 {
        1.0
    } else {
        0.0
    };
    BootstrapResult {
        estimate,
        se,
        ci_lo,
        ci_hi,
        pvalue,
        n_failed,
    }
}

/// Bootstrap for an estimator returning a fixed-length vector, e.g. one
/// value per grid cell. A replicate fails when the closure errors or
/// returns a non-finite value; it is redrawn up to `max_redraws` times.
pub fn bootstrap_many<F>(estimator: F, ds: &Dataset, cfg: &BootstrapConfig) -> Result<Vec<BootstrapResult>>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    cfg.check()?;
    let est = estimator(ds)?;
    let m = est.len();
    let n = ds.n();
    let attempt = |r: usize| -> Option<Vec<f64>> {
        let mut rng = substream(cfg.seed, r as u64);
        for _ in 0..=cfg.max_redraws {
            let idx = resample_indices(&mut rng, n);
            if let Ok(v) = estimator(&ds.subset(&idx)) {
                if v.len() == m && v.iter().all(|x| x.is_finite()) {
                    return Some(v);
                }
            }
        }
        None
    };
    let reps: Vec<Option<Vec<f64>>> = (0..cfg.n_boot).into_par_iter().map(attempt).collect();
    let ok: Vec<&Vec<f64>> = reps.iter().flatten().collect();
    let n_failed = cfg.n_boot - ok.len();
    if n_failed * 10 > cfg.n_boot || ok.len() < 2 {
        return Err(Error::UnstableResampling {
            failed: n_failed,
            n_boot: cfg.n_boot,
        });
    }
    Ok((0..m)
        .map(|j| {
            let col: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            summarize(est[j], &col, n_failed, cfg)
        })
        .collect())
}

/// Bootstrap for a scalar estimator.
pub fn bootstrap<F>(estimator: F, ds: &Dataset, cfg: &BootstrapConfig) -> Result<BootstrapResult>
where
    F: Fn(&Dataset) -> Result<f64> + Sync,
{
    let mut out = bootstrap_many(|d| estimator(d).map(|v| vec![v]), ds, cfg)?;
    Ok(out.remove(0))
}
