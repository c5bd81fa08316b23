//! Fitted propensity scores and arm-specific outcome means.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glm::{fit_glm, truncate_pscore, Family, GlmConfig, GlmFit};

/// Scale on which the outcome regressions are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeScale {
    /// Regress `Y` itself with the configured family.
    #[default]
    Raw,
    /// Gaussian regression of `log Y`, back-transformed with Duan's smearing
    /// factor (the arm mean of the exponentiated residuals). Requires `Y > 0`.
    LogSmearing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    pub pscore_family: Family,
    pub outcome_family: Family,
    /// Propensity truncation bounds, `(0, 1)` for none.
    pub trunc: (f64, f64),
    pub glm: GlmConfig,
    /// Covariate columns for the propensity model; all when `None`.
    pub pscore_covariates: Option<Vec<usize>>,
    /// Covariate columns for the outcome models; all when `None`.
    pub outcome_covariates: Option<Vec<usize>>,
    pub outcome_scale: OutcomeScale,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            pscore_family: Family::Binomial,
            outcome_family: Family::Gaussian,
            trunc: (0.0, 1.0),
            glm: GlmConfig::default(),
            pscore_covariates: None,
            outcome_covariates: None,
            outcome_scale: OutcomeScale::Raw,
        }
    }
}

impl NuisanceConfig {
    pub fn binary_outcome() -> Self {
        Self {
            outcome_family: Family::Binomial,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFits {
    /// Propensity scores after truncation, strictly inside (0, 1).
    pub ehat: Vec<f64>,
    pub mu1hat: Vec<f64>,
    pub mu0hat: Vec<f64>,
    pub pscore_model: Option<GlmFit>,
    pub outcome_models: Option<[GlmFit; 2]>,
    pub n_truncated: usize,
    pub warnings: Vec<String>,
}

impl NuisanceFits {
    /// Wraps externally supplied nuisance values.
    pub fn from_values(ehat: Vec<f64>, mu1hat: Vec<f64>, mu0hat: Vec<f64>) -> Result<Self> {
        if mu1hat.len() != ehat.len() || mu0hat.len() != ehat.len() {
            return Err(Error::DimensionMismatch(format!(
                "nuisance vectors have lengths {}, {}, {}",
                ehat.len(),
                mu1hat.len(),
                mu0hat.len()
            )));
        }
        if let Some(e) = ehat.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "propensity score {e} outside (0, 1)"
            )));
        }
        Ok(Self {
            ehat,
            mu1hat,
            mu0hat,
            pscore_model: None,
            outcome_models: None,
            n_truncated: 0,
            warnings: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.ehat.len()
    }

    pub(crate) fn check_against(&self, ds: &Dataset) -> Result<()> {
        if self.n() != ds.n() {
            return Err(Error::DimensionMismatch(format!(
                "nuisance fits have {} rows, dataset has {}",
                self.n(),
                ds.n()
            )));
        }
        Ok(())
    }

    /// Fitted mean of the arm unit `i` was assigned to.
    #[inline]
    pub fn mu_assigned(&self, ds: &Dataset, i: usize) -> f64 {
        if ds.z()[i] == 1 {
            self.mu1hat[i]
        } else {
            self.mu0hat[i]
        }
    }
}

fn columns_view<'a>(ds: &'a Dataset, cols: &Option<Vec<usize>>) -> Result<ndarray::Array2<f64>> {
    match cols {
        None => Ok(ds.x().clone()),
        Some(c) => {
            if let Some(&bad) = c.iter().find(|&&j| j >= ds.p()) {
                return Err(Error::InvalidArgument(format!(
                    "covariate index {bad} out of range for p = {}",
                    ds.p()
                )));
            }
            Ok(ds.x().select(Axis(1), c))
        }
    }
}

/// Propensity scores `pr(Z = 1 | X)` from a logistic fit, truncated and then
/// kept strictly inside (0, 1).
pub fn fit_pscore(ds: &Dataset, cfg: &NuisanceConfig) -> Result<(Vec<f64>, GlmFit, usize, Vec<String>)> {
    if cfg.pscore_family != Family::Binomial {
        return Err(Error::InvalidArgument(format!(
            "binary treatment propensity requires the binomial family, got {}",
            cfg.pscore_family.name()
        )));
    }
    let x = columns_view(ds, &cfg.pscore_covariates)?;
    let z: Vec<f64> = ds.z().iter().map(|&v| v as f64).collect();
    let fit = fit_glm(x.view(), &z, Family::Binomial, &cfg.glm)?;
    let raw = fit.predict_mean(x.view())?;
    let (mut e, n_trunc) = truncate_pscore(raw.as_slice().unwrap_or(&raw.to_vec()), cfg.trunc)?;
    let mut warnings = fit.warnings.clone();
    let lo = f64::EPSILON;
    let hi = 1.0 - f64::EPSILON;
    let mut n_edge = 0;
    for v in &mut e {
        if *v < lo || *v > hi {
            *v = v.clamp(lo, hi);
            n_edge += 1;
        }
    }
    if n_edge > 0 {
        warnings.push(format!(
            "{n_edge} propensity score(s) at 0 or 1 moved inside (0, 1)"
        ));
    }
    if n_trunc > 0 {
        warnings.push(format!("{n_trunc} propensity score(s) truncated"));
    }
    Ok((e, fit, n_trunc, warnings))
}

/// Outcome regression within treatment level `level`, predicted for all rows.
pub(crate) fn fit_outcome_arm(
    x: ArrayView2<'_, f64>,
    z: &[usize],
    y: &[f64],
    level: usize,
    family: Family,
    scale: OutcomeScale,
    glm: &GlmConfig,
) -> Result<(Vec<f64>, GlmFit)> {
    let rows: Vec<usize> = (0..y.len()).filter(|&i| z[i] == level).collect();
    if rows.is_empty() {
        return Err(Error::Estimation(format!("treatment level {level} has no units")));
    }
    let xa = x.select(Axis(0), &rows);
    match scale {
        OutcomeScale::Raw => {
            let ya: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let fit = fit_glm(xa.view(), &ya, family, glm)?;
            let pred = fit.predict_mean(x)?.to_vec();
            Ok((pred, fit))
        }
        OutcomeScale::LogSmearing => {
            if let Some(&i) = rows.iter().find(|&&i| y[i] <= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "log-scale outcome model needs positive outcomes, row {} has {}",
                    i + 1,
                    y[i]
                )));
            }
            let ly: Vec<f64> = rows.iter().map(|&i| y[i].ln()).collect();
            let fit = fit_glm(xa.view(), &ly, Family::Gaussian, glm)?;
            let own = fit.predict_mean(xa.view())?;
            let smear = ly
                .iter()
                .zip(own.iter())
                .map(|(a, b)| (a - b).exp())
                .sum::<f64>()
                / ly.len() as f64;
            let pred = fit.predict_mean(x)?.iter().map(|v| v.exp() * smear).collect();
            Ok((pred, fit))
        }
    }
}

/// Fits `mu_1` and `mu_0` on the treated and control units respectively.
pub fn fit_outcomes(ds: &Dataset, cfg: &NuisanceConfig) -> Result<(Vec<f64>, Vec<f64>, [GlmFit; 2])> {
    let x = columns_view(ds, &cfg.outcome_covariates)?;
    let (mu1, f1) = fit_outcome_arm(
        x.view(),
        ds.z(),
        ds.y(),
        1,
        cfg.outcome_family,
        cfg.outcome_scale,
        &cfg.glm,
    )?;
    let (mu0, f0) = fit_outcome_arm(
        x.view(),
        ds.z(),
        ds.y(),
        0,
        cfg.outcome_family,
        cfg.outcome_scale,
        &cfg.glm,
    )?;
    Ok((mu1, mu0, [f1, f0]))
}

/// Propensity and both outcome models for a binary-treatment dataset.
pub fn fit_nuisances(ds: &Dataset, cfg: &NuisanceConfig) -> Result<NuisanceFits> {
    let (ehat, pfit, n_truncated, mut warnings) = fit_pscore(ds, cfg)?;
    let (mu1hat, mu0hat, ofits) = fit_outcomes(ds, cfg)?;
    for (arm, f) in ["treated", "control"].iter().zip(&ofits) {
        warnings.extend(f.warnings.iter().map(|w| format!("{arm} outcome model: {w}")));
    }
    Ok(NuisanceFits {
        ehat,
        mu1hat,
        mu0hat,
        pscore_model: Some(pfit),
        outcome_models: Some(ofits),
        n_truncated,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn from_values_checks_overlap() {
        assert!(NuisanceFits::from_values(vec![0.5, 1.0], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(NuisanceFits::from_values(vec![0.5], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(NuisanceFits::from_values(vec![0.5, 0.2], vec![0.0; 2], vec![0.0; 2]).is_ok());
    }

    #[test]
    fn fits_linear_outcomes_per_arm() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [0.5], [1.5], [2.5], [3.5]];
        let z = vec![1, 1, 1, 1, 0, 0, 0, 0];
        let y: Vec<f64> = (0..8)
            .map(|i| if z[i] == 1 { 1.0 + x[[i, 0]] } else { 2.0 * x[[i, 0]] })
            .collect();
        let ds = Dataset::from_parts(x, z, y).unwrap();
        let fits = fit_nuisances(&ds, &NuisanceConfig::default()).unwrap();
        assert!((fits.mu1hat[4] - 1.5).abs() < 1e-12);
        assert!((fits.mu0hat[0] - 0.0).abs() < 1e-12);
        assert!(fits.ehat.iter().all(|&e| e > 0.0 && e < 1.0));
    }

    #[test]
    fn log_smearing_recovers_multiplicative_mean() {
        let x = array![[0.0], [1.0], [0.0], [1.0], [0.0], [1.0]];
        let z = vec![1, 1, 1, 1, 0, 0];
        // within the treated arm log y = x + r with residuals +-0.1
        let y = vec![
            (0.1f64).exp(),
            (1.0f64 - 0.1).exp(),
            (-0.1f64).exp(),
            (1.1f64).exp(),
            1.0,
            2.0,
        ];
        let ds = Dataset::from_parts(x.clone(), z.clone(), y.clone()).unwrap();
        let (mu, _) = fit_outcome_arm(
            x.view(),
            &z,
            &y,
            1,
            Family::Gaussian,
            OutcomeScale::LogSmearing,
            &GlmConfig::default(),
        )
        .unwrap();
        let smear = ((0.1f64).exp() + (-0.1f64).exp()) / 2.0;
        assert!((mu[0] - smear).abs() < 1e-12);
        assert!((mu[1] - (1.0f64).exp() * smear).abs() < 1e-12);
        drop(ds);
    }
}
