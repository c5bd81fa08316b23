//! Monte Carlo harness for the coverage study.
//!
//! Data: `X1, X2 ~ N(0, 0.5^2)`, `X3 ~ Bernoulli(0.5)`, an unobserved
//! `U ~ Bernoulli(0.5)`, `Z ~ Bernoulli(0.25 + 0.5 U)`,
//! `log Y(1) = X1 + X2 + bU + e1` and `log Y(0) = X1 + X2 + bX3 + e0` with
//! `e_z ~ N(0, 0.5^2)`. The average effect is 0 for every `b`, `eps0 = 1`
//! and `eps1` is the constant [`true_eps1`]`(b)`.
//!
//! For each `b` and replicate the DR estimate at every grid `eps1` (with
//! `eps0 = 1`) is bootstrapped once, refitting the nuisances per resample.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ate::{ate, Method};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::inference::{bootstrap_many, substream, BootstrapConfig};
use crate::nuisance::{fit_nuisances, NuisanceConfig, OutcomeScale};
use crate::sensitivity::SensitivitySpec;

pub const DEFAULT_B: [f64; 6] = [0.0, 0.2, 0.3, 0.5, 1.0, 1.5];
pub const DEFAULT_EPS1: [f64; 6] = [1.0, 1.10, 1.16, 1.28, 1.60, 1.93];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub b_list: Vec<f64>,
    pub eps1_list: Vec<f64>,
    pub n_mc: usize,
    pub n_boot: usize,
    pub seed: u64,
    pub outcome_scale: OutcomeScale,
    pub ci_level: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 500,
            b_list: DEFAULT_B.to_vec(),
            eps1_list: DEFAULT_EPS1.to_vec(),
            n_mc: 200,
            n_boot: 200,
            seed: 20_240_501,
            outcome_scale: OutcomeScale::Raw,
            ci_level: 0.95,
        }
    }
}

impl SimConfig {
    /// The full-size grid: 500 replicates per `b`.
    pub fn full_scale() -> Self {
        Self {
            n_mc: 500,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.n < 10 || self.n_mc == 0 || self.n_boot < 2 {
            return Err(Error::InvalidArgument(format!(
                "simulation needs n >= 10, n_mc >= 1 and n_boot >= 2 (got {}, {}, {})",
                self.n, self.n_mc, self.n_boot
            )));
        }
        if self.b_list.is_empty() || self.eps1_list.is_empty() {
            return Err(Error::InvalidArgument("b and eps1 lists must be nonempty".into()));
        }
        if let Some(b) = self.b_list.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::InvalidArgument(format!("b must be >= 0, got {b}")));
        }
        if let Some(e) = self.eps1_list.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidArgument(format!("eps1 must be positive, got {e}")));
        }
        Ok(())
    }
}

/// `{0.75 exp(b) + 0.25} / {0.25 exp(b) + 0.75}`.
pub fn true_eps1(b: f64) -> f64 {
    let eb = b.exp();
    (0.75 * eb + 0.25) / (0.25 * eb + 0.75)
}

/// One draw with both potential outcomes and the hidden confounder.
#[derive(Debug, Clone)]
pub struct FullDraw {
    pub x: Array2<f64>,
    pub u: Vec<u8>,
    pub z: Vec<usize>,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
}

impl FullDraw {
    /// The observed data `(X1, X2, X3, Z, Y(Z))`.
    pub fn observed(&self) -> Result<Dataset> {
        let y = (0..self.z.len())
            .map(|i| if self.z[i] == 1 { self.y1[i] } else { self.y0[i] })
            .collect();
        Dataset::new(
            self.x.clone(),
            vec!["x1".into(), "x2".into(), "x3".into()],
            self.z.clone(),
            y,
            None,
        )
    }
}

pub fn draw_full<R: Rng + ?Sized>(n: usize, b: f64, rng: &mut R) -> FullDraw {
    let half = Normal::new(0.0, 0.5).expect("valid normal");
    let mut x = Array2::zeros((n, 3));
    let mut u = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    for i in 0..n {
        let x1 = half.sample(rng);
        let x2 = half.sample(rng);
        let x3 = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let ui = rng.random_bool(0.5) as u8;
        let zi = rng.random_bool(0.25 + 0.5 * ui as f64) as usize;
        let e1 = half.sample(rng);
        let e0 = half.sample(rng);
        x[[i, 0]] = x1;
        x[[i, 1]] = x2;
        x[[i, 2]] = x3;
        u.push(ui);
        z.push(zi);
        y1.push((x1 + x2 + b * ui as f64 + e1).exp());
        y0.push((x1 + x2 + b * x3 + e0).exp());
    }
    FullDraw { x, u, z, y1, y0 }
}

/// Observed data from the study design; `U` is not part of the covariates.
pub fn draw_dgp<R: Rng + ?Sized>(n: usize, b: f64, rng: &mut R) -> Result<Dataset> {
    draw_full(n, b, rng).observed()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTable {
    pub b_list: Vec<f64>,
    pub eps1_list: Vec<f64>,
    pub n_mc: usize,
    /// `coverage[b][eps1]`: fraction of intervals containing 0.
    pub coverage: Vec<Vec<f64>>,
    /// `false_rejection[b][eps1]`: fraction of intervals entirely above 0.
    pub false_rejection: Vec<Vec<f64>>,
    /// Replicates per `b` lost to estimation or resampling failures.
    pub n_failed: Vec<usize>,
}

impl SimTable {
    /// Grid index closest to `true_eps1(b)` for row `bi`.
    pub fn true_index(&self, bi: usize) -> usize {
        let t = true_eps1(self.b_list[bi]);
        let mut best = 0;
        for (j, e) in self.eps1_list.iter().enumerate() {
            if (e - t).abs() < (self.eps1_list[best] - t).abs() {
                best = j;
            }
        }
        best
    }

    /// Two blocks, coverage then false rejection, one row per `b`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("block,b,true_eps1");
        for e in &self.eps1_list {
            write!(s, ",eps1={e:.2}").unwrap();
        }
        s.push_str(",n_failed\n");
        for (name, block) in [("coverage", &self.coverage), ("false_rejection", &self.false_rejection)] {
            for (bi, row) in block.iter().enumerate() {
                let b = self.b_list[bi];
                write!(s, "{name},{b:.2},{:.2}", true_eps1(b)).unwrap();
                for v in row {
                    write!(s, ",{v:.3}").unwrap();
                }
                writeln!(s, ",{}", self.n_failed[bi]).unwrap();
            }
        }
        s
    }
}

/// DR estimates at `eps0 = 1` and every `eps1` in `grid`, with nuisances
/// refitted on `ds`.
pub fn dr_over_grid(ds: &Dataset, grid: &[f64], cfg: &NuisanceConfig) -> Result<Vec<f64>> {
    let fits = fit_nuisances(ds, cfg)?;
    grid.iter()
        .map(|&e1| ate(Method::Dr, ds, &fits, &SensitivitySpec::constant(e1, 1.0)))
        .collect()
}

/// Interval outcomes `(covers 0, lower bound > 0)` per grid `eps1` for one
/// replicate.
fn one_replicate(cfg: &SimConfig, bi: usize, r: usize) -> Result<Vec<(bool, bool)>> {
    let stream = ((bi as u64) << 32) | r as u64;
    let mut rng = substream(cfg.seed, stream);
    let ds = draw_dgp(cfg.n, cfg.b_list[bi], &mut rng)?;
    let ncfg = NuisanceConfig {
        outcome_scale: cfg.outcome_scale,
        ..NuisanceConfig::default()
    };
    let bcfg = BootstrapConfig {
        n_boot: cfg.n_boot,
        ci_level: cfg.ci_level,
        seed: rng.next_u64(),
        ..BootstrapConfig::default()
    };
    let res = bootstrap_many(|d| dr_over_grid(d, &cfg.eps1_list, &ncfg), &ds, &bcfg)?;
    Ok(res
        .iter()
        .map(|r| (r.ci_lo <= 0.0 && 0.0 <= r.ci_hi, r.ci_lo > 0.0))
        .collect())
}

pub fn run_simulation(cfg: &SimConfig) -> Result<SimTable> {
    cfg.check()?;
    let m = cfg.eps1_list.len();
    let mut coverage = Vec::new();
    let mut false_rejection = Vec::new();
    let mut n_failed = Vec::new();
    for bi in 0..cfg.b_list.len() {
        let reps: Vec<Option<Vec<(bool, bool)>>> = (0..cfg.n_mc)
            .into_par_iter()
            .map(|r| one_replicate(cfg, bi, r).ok())
            .collect();
        let ok: Vec<&Vec<(bool, bool)>> = reps.iter().flatten().collect();
        n_failed.push(cfg.n_mc - ok.len());
        let denom = ok.len().max(1) as f64;
        coverage.push(
            (0..m)
                .map(|j| ok.iter().filter(|v| v[j].0).count() as f64 / denom)
                .collect(),
        );
        false_rejection.push(
            (0..m)
                .map(|j| ok.iter().filter(|v| v[j].1).count() as f64 / denom)
                .collect(),
        );
    }
    Ok(SimTable {
        b_list: cfg.b_list.clone(),
        eps1_list: cfg.eps1_list.clone(),
        n_mc: cfg.n_mc,
        coverage,
        false_rejection,
        n_failed,
    })
}

/// Monte Carlo standard error of a rejection rate near 0.05.
pub fn mc_se(n_mc: usize) -> f64 {
    (0.05 * 0.95 / n_mc as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn true_eps1_values() {
        assert_eq!(true_eps1(0.0), 1.0);
        assert_eq!(format!("{:.2}", true_eps1(0.2)), "1.10");
        assert_eq!(format!("{:.2}", true_eps1(1.5)), "1.93");
        for (b, e) in DEFAULT_B.iter().zip(DEFAULT_EPS1) {
            assert_eq!(format!("{:.2}", true_eps1(*b)), format!("{e:.2}"));
        }
    }

    #[test]
    fn treated_fraction_and_moments() {
        let n = 20_000;
        let mut rng = substream(1, 0);
        let d = draw_full(n, 0.8, &mut rng);
        let frac = d.z.iter().sum::<usize>() as f64 / n as f64;
        let sd = (0.25 / n as f64).sqrt();
        assert!((frac - 0.5).abs() < 3.0 * sd);
        let mean_log_y0 = d.y0.iter().map(|v| v.ln()).sum::<f64>() / n as f64;
        // var(log Y(0)) = 0.25 + 0.25 + 0.16 + 0.25
        let sd = ((0.25 + 0.25 + 0.8 * 0.8 * 0.25 + 0.25) / n as f64).sqrt();
        assert!((mean_log_y0 - 0.4).abs() < 4.0 * sd);
    }

    #[test]
    fn table_shape_and_determinism() {
        let cfg = SimConfig {
            n: 100,
            b_list: vec![0.0, 1.0],
            eps1_list: vec![1.0, 1.6],
            n_mc: 3,
            n_boot: 20,
            seed: 5,
            ..SimConfig::default()
        };
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_csv().lines().count(), 5);
        assert_eq!(a.true_index(1), 1);
    }
}
