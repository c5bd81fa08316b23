//! Leave-covariates-out benchmarks for the sensitivity parameters.
//!
//! Pretending the covariates in `S` were unobserved, the implied parameter
//! for arm `z` is `E{mu_z(X) | Z=1, X_-S} / E{mu_z(X) | Z=0, X_-S}`. The two
//! conditional means are estimated by least-squares regressions of the
//! fitted `mu_z` on `X_-S` within the treated and control units, so the
//! numbers depend on that linear projection.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glm::{fit_glm, Family, GlmConfig};
use crate::nuisance::NuisanceFits;
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
    /// Units whose ratio was non-positive or non-finite and left out.
    pub n_excluded: usize,
}

impl RatioSummary {
    fn from_values(values: &[f64]) -> Result<Self> {
        let mut ok: Vec<f64> = values.iter().copied().filter(|v| v.is_finite() && *v > 0.0).collect();
        let n_excluded = values.len() - ok.len();
        if ok.is_empty() {
            return Err(Error::Estimation("no unit has a positive finite ratio".into()));
        }
        ok.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&ok, p);
        Ok(Self {
            min: ok[0],
            max: ok[ok.len() - 1],
            mean: ok.iter().sum::<f64>() / ok.len() as f64,
            q05: q(0.05),
            q25: q(0.25),
            q50: q(0.5),
            q75: q(0.75),
            q95: q(0.95),
            n_excluded,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    /// Names of the left-out covariates.
    pub dropped: Vec<String>,
    pub eps1: RatioSummary,
    pub eps0: RatioSummary,
}

impl CalibrationRecord {
    /// `+`-joined covariate names, or `none`.
    pub fn label(&self) -> String {
        if self.dropped.is_empty() {
            "none".to_string()
        } else {
            self.dropped.join("+")
        }
    }
}

/// Per-unit implied `(eps1, eps0)` when the covariates `drop` are left out.
pub fn implied_eps(ds: &Dataset, fits: &NuisanceFits, drop: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    fits.check_against(ds)?;
    if let Some(&j) = drop.iter().find(|&&j| j >= ds.p()) {
        return Err(Error::InvalidArgument(format!(
            "covariate index {j} out of range for p = {}",
            ds.p()
        )));
    }
    for level in [0, 1] {
        if ds.count_level(level) == 0 {
            return Err(Error::Estimation("both arms need units".into()));
        }
    }
    let n = ds.n();
    if drop.is_empty() {
        // conditioning on all of X leaves mu_z(X) unchanged in both arms
        return Ok((vec![1.0; n], vec![1.0; n]));
    }
    let keep: Vec<usize> = (0..ds.p()).filter(|j| !drop.contains(j)).collect();
    let xk = ds.x().select(Axis(1), &keep);
    let project = |target: &[f64], level: usize| -> Result<Vec<f64>> {
        let rows: Vec<usize> = (0..n).filter(|&i| ds.z()[i] == level).collect();
        let t: Vec<f64> = rows.iter().map(|&i| target[i]).collect();
        let xa = xk.select(Axis(0), &rows);
        let fit = fit_glm(xa.view(), &t, Family::Gaussian, &GlmConfig::default())?;
        Ok(fit.predict_mean(xk.view())?.to_vec())
    };
    let ratio = |target: &[f64]| -> Result<Vec<f64>> {
        let num = project(target, 1)?;
        let den = project(target, 0)?;
        Ok(num.iter().zip(&den).map(|(a, b)| a / b).collect())
    };
    Ok((ratio(&fits.mu1hat)?, ratio(&fits.mu0hat)?))
}

/// Summaries of the implied parameters with the covariates `drop` left out.
pub fn calibrate(ds: &Dataset, fits: &NuisanceFits, drop: &[usize]) -> Result<CalibrationRecord> {
    let (e1, e0) = implied_eps(ds, fits, drop)?;
    let mut sorted = drop.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    Ok(CalibrationRecord {
        dropped: sorted.iter().map(|&j| ds.names()[j].clone()).collect(),
        eps1: RatioSummary::from_values(&e1)?,
        eps0: RatioSummary::from_values(&e0)?,
    })
}

/// One record per covariate, leaving each out in turn.
pub fn calibrate_each(ds: &Dataset, fits: &NuisanceFits) -> Result<Vec<CalibrationRecord>> {
    (0..ds.p()).map(|j| calibrate(ds, fits, &[j])).collect()
}
