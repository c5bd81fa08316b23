//! Average causal effect under ratio-scale sensitivity parameters.
//!
//! Every estimator here is the usual regression, weighting or augmented
//! estimator with the counterfactual arm means rescaled by the sensitivity
//! parameters. With `eps1 = eps0 = 1` each one reduces to its classical
//! unconfounded counterpart.
//!
//! Notation in comments: `e` is the fitted propensity score, `mu1`/`mu0` the
//! fitted outcome means, `w1 = e + (1 - e)/eps1`, `w0 = e*eps0 + 1 - e`,
//! `r = Y - mu_Z` the outcome residual and `d = Z - e` the treatment
//! residual.

mod matching;

pub use matching::{ate_matching_bc, match_counts};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::NuisanceFits;
use crate::sensitivity::SensitivitySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Regression imputation keeping observed outcomes.
    Pred,
    /// Regression imputation with fitted values everywhere.
    Proj,
    /// Horvitz-Thompson weighting.
    Ht,
    /// Self-normalized weighting.
    Hajek,
    /// Efficient-influence-function (augmented) estimator.
    Dr,
    /// Projective estimator augmented with Hajek-normalized residuals.
    Dr2,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Pred,
        Method::Proj,
        Method::Ht,
        Method::Hajek,
        Method::Dr,
        Method::Dr2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Pred => "pred",
            Method::Proj => "proj",
            Method::Ht => "ht",
            Method::Hajek => "hajek",
            Method::Dr => "dr",
            Method::Dr2 => "dr2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Treated,
    Control,
}

/// Weighting factors `(w1, w0)` for one unit.
#[inline]
pub fn weights_w(e: f64, eps1: f64, eps0: f64) -> (f64, f64) {
    (e + (1.0 - e) / eps1, e * eps0 + 1.0 - e)
}

/// Per-unit quantities shared by all estimators.
pub(crate) struct Prepared<'a> {
    pub z: Vec<f64>,
    pub y: &'a [f64],
    pub e: &'a [f64],
    pub mu1: &'a [f64],
    pub mu0: &'a [f64],
    pub eps1: Vec<f64>,
    pub eps0: Vec<f64>,
}

impl<'a> Prepared<'a> {
    pub fn new(ds: &'a Dataset, fits: &'a NuisanceFits, eps: &SensitivitySpec) -> Result<Self> {
        fits.check_against(ds)?;
        let (eps1, eps0) = eps.evaluate(ds.x().view())?;
        let z: Vec<f64> = (0..ds.n()).map(|i| ds.zf(i)).collect();
        let n1 = z.iter().filter(|&&v| v == 1.0).count();
        if n1 == 0 {
            return Err(Error::Estimation("treated arm is empty".into()));
        }
        if n1 == z.len() {
            return Err(Error::Estimation("control arm is empty".into()));
        }
        Ok(Self {
            z,
            y: ds.y(),
            e: &fits.ehat,
            mu1: &fits.mu1hat,
            mu0: &fits.mu0hat,
            eps1,
            eps0,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn mean(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.n()).map(f).sum::<f64>() / self.n() as f64
    }

    fn resid(&self, i: usize) -> f64 {
        if self.z[i] == 1.0 {
            self.y[i] - self.mu1[i]
        } else {
            self.y[i] - self.mu0[i]
        }
    }

    fn w(&self, i: usize) -> (f64, f64) {
        weights_w(self.e[i], self.eps1[i], self.eps0[i])
    }

    pub fn potential_mean(&self, arm: Arm, method: Method) -> f64 {
        match arm {
            Arm::Treated => self.treated_mean(method),
            Arm::Control => self.control_mean(method),
        }
    }

    fn treated_mean(&self, method: Method) -> f64 {
        let (z, y, e, mu1, eps1) = (&self.z, self.y, self.e, self.mu1, &self.eps1);
        match method {
            Method::Pred => self.mean(|i| z[i] * y[i] + (1.0 - z[i]) * mu1[i] / eps1[i]),
            Method::Proj => self.mean(|i| z[i] * mu1[i] + (1.0 - z[i]) * mu1[i] / eps1[i]),
            Method::Ht => self.mean(|i| self.w(i).0 * z[i] * y[i] / e[i]),
            Method::Hajek => {
                let num: f64 = (0..self.n()).map(|i| self.w(i).0 * z[i] * y[i] / e[i]).sum();
                let den: f64 = (0..self.n()).map(|i| z[i] / e[i]).sum();
                num / den
            }
            Method::Dr => self.mean(|i| {
                self.w(i).0 * z[i] * y[i] / e[i] - (z[i] - e[i]) * mu1[i] / (e[i] * eps1[i])
            }),
            Method::Dr2 => {
                let num: f64 = (0..self.n())
                    .map(|i| self.w(i).0 * z[i] * self.resid(i) / e[i])
                    .sum();
                let den: f64 = (0..self.n()).map(|i| z[i] / e[i]).sum();
                self.treated_mean(Method::Proj) + num / den
            }
        }
    }

    fn control_mean(&self, method: Method) -> f64 {
        let (z, y, e, mu0, eps0) = (&self.z, self.y, self.e, self.mu0, &self.eps0);
        match method {
            Method::Pred => self.mean(|i| z[i] * mu0[i] * eps0[i] + (1.0 - z[i]) * y[i]),
            Method::Proj => self.mean(|i| z[i] * mu0[i] * eps0[i] + (1.0 - z[i]) * mu0[i]),
            Method::Ht => self.mean(|i| self.w(i).1 * (1.0 - z[i]) * y[i] / (1.0 - e[i])),
            Method::Hajek => {
                let num: f64 = (0..self.n())
                    .map(|i| self.w(i).1 * (1.0 - z[i]) * y[i] / (1.0 - e[i]))
                    .sum();
                let den: f64 = (0..self.n()).map(|i| (1.0 - z[i]) / (1.0 - e[i])).sum();
                num / den
            }
            Method::Dr => self.mean(|i| {
                self.w(i).1 * (1.0 - z[i]) * y[i] / (1.0 - e[i])
                    + (z[i] - e[i]) * mu0[i] * eps0[i] / (1.0 - e[i])
            }),
            Method::Dr2 => {
                let num: f64 = (0..self.n())
                    .map(|i| self.w(i).1 * (1.0 - z[i]) * self.resid(i) / (1.0 - e[i]))
                    .sum();
                let den: f64 = (0..self.n()).map(|i| (1.0 - z[i]) / (1.0 - e[i])).sum();
                self.control_mean(Method::Proj) + num / den
            }
        }
    }

    pub fn ate(&self, method: Method) -> f64 {
        self.potential_mean(Arm::Treated, method) - self.potential_mean(Arm::Control, method)
    }

    pub fn dr_forms(&self) -> DrForms {
        let (z, e) = (&self.z, self.e);
        let eif = self.ate(Method::Dr);
        let aug_ht = self.ate(Method::Ht)
            - self.mean(|i| {
                (z[i] - e[i])
                    * (self.mu1[i] / (e[i] * self.eps1[i])
                        + self.mu0[i] * self.eps0[i] / (1.0 - e[i]))
            });
        let aug_pred = self.ate(Method::Pred)
            + self.mean(|i| {
                let r = self.resid(i);
                (1.0 - e[i]) / self.eps1[i] * z[i] * r / e[i]
                    - e[i] * self.eps0[i] * (1.0 - z[i]) * r / (1.0 - e[i])
            });
        let aug_proj = self.ate(Method::Proj)
            + self.mean(|i| {
                let r = self.resid(i);
                let (w1, w0) = self.w(i);
                w1 * z[i] * r / e[i] - w0 * (1.0 - z[i]) * r / (1.0 - e[i])
            });
        DrForms {
            eif,
            aug_ht,
            aug_pred,
            aug_proj,
        }
    }

    /// Per-unit `phi_1 - phi_0` with the estimated effect plugged in.
    pub fn eif(&self) -> Vec<f64> {
        let tau = self.ate(Method::Dr);
        let (z, y, e) = (&self.z, self.y, self.e);
        (0..self.n())
            .map(|i| {
                let (w1, w0) = self.w(i);
                let d = z[i] - e[i];
                let phi1 = w1 * z[i] * y[i] / e[i] - d * self.mu1[i] / (e[i] * self.eps1[i]);
                let phi0 = w0 * (1.0 - z[i]) * y[i] / (1.0 - e[i])
                    + d * self.mu0[i] * self.eps0[i] / (1.0 - e[i]);
                phi1 - phi0 - tau
            })
            .collect()
    }

    /// Arm-wide mean squared outcome residuals `(v1, v0)`.
    pub fn residual_variances(&self) -> (f64, f64) {
        let mut acc = [(0.0, 0usize); 2];
        for i in 0..self.n() {
            let k = if self.z[i] == 1.0 { 0 } else { 1 };
            acc[k].0 += self.resid(i).powi(2);
            acc[k].1 += 1;
        }
        (acc[0].0 / acc[0].1 as f64, acc[1].0 / acc[1].1 as f64)
    }
}

/// The four algebraically identical forms of the doubly robust estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrForms {
    /// Sample mean of the uncentered efficient influence function.
    pub eif: f64,
    /// Weighting estimate augmented by imputed outcomes.
    pub aug_ht: f64,
    /// Predictive estimate plus weighted residuals.
    pub aug_pred: f64,
    /// Projective estimate plus weighted residuals.
    pub aug_proj: f64,
}

impl DrForms {
    pub fn max_abs_diff(&self) -> f64 {
        let v = [self.eif, self.aug_ht, self.aug_pred, self.aug_proj];
        let mut m: f64 = 0.0;
        for a in v {
            for b in v {
                m = m.max((a - b).abs());
            }
        }
        m
    }
}

/// Estimate of `E{Y(1)}` or `E{Y(0)}`.
pub fn potential_mean(
    arm: Arm,
    method: Method,
    ds: &Dataset,
    fits: &NuisanceFits,
    eps: &SensitivitySpec,
) -> Result<f64> {
    Ok(Prepared::new(ds, fits, eps)?.potential_mean(arm, method))
}

/// Estimate of the average causal effect `E{Y(1) - Y(0)}`.
pub fn ate(method: Method, ds: &Dataset, fits: &NuisanceFits, eps: &SensitivitySpec) -> Result<f64> {
    Ok(Prepared::new(ds, fits, eps)?.ate(method))
}

pub fn ate_dr_forms(ds: &Dataset, fits: &NuisanceFits, eps: &SensitivitySpec) -> Result<DrForms> {
    Ok(Prepared::new(ds, fits, eps)?.dr_forms())
}

/// Estimated efficient influence function values, centered at the DR
/// estimate.
pub fn eif_values(ds: &Dataset, fits: &NuisanceFits, eps: &SensitivitySpec) -> Result<Vec<f64>> {
    Ok(Prepared::new(ds, fits, eps)?.eif())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
    pub warnings: Vec<String>,
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{name} range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
        )));
    }
    Ok(())
}

pub(crate) fn sign_warning(ds: &Dataset) -> Option<String> {
    let neg = ds.y().iter().any(|&v| v < 0.0);
    let pos = ds.y().iter().any(|&v| v > 0.0);
    (neg && pos).then(|| {
        "outcomes take both signs; worst-case bounds assume non-negative (or non-positive) outcomes"
            .to_string()
    })
}

/// Worst-case bounds when `eps_z(X)` is only known to lie in a range.
///
/// The lower bound plugs in the upper ends of both ranges, the upper bound
/// the lower ends. For non-positive outcomes the roles flip and the pair is
/// returned sorted. The DR version is not clamped to the regression and
/// weighting envelopes.
pub fn ate_bounds(
    ds: &Dataset,
    fits: &NuisanceFits,
    eps1_range: (f64, f64),
    eps0_range: (f64, f64),
    method: Method,
) -> Result<Bounds> {
    check_range("eps1", eps1_range)?;
    check_range("eps0", eps0_range)?;
    let lower = ate(
        method,
        ds,
        fits,
        &SensitivitySpec::constant(eps1_range.1, eps0_range.1),
    )?;
    let upper = ate(
        method,
        ds,
        fits,
        &SensitivitySpec::constant(eps1_range.0, eps0_range.0),
    )?;
    let warnings = sign_warning(ds).into_iter().collect();
    Ok(Bounds {
        lower: lower.min(upper),
        upper: lower.max(upper),
        warnings,
    })
}

/// Sensitivity parameter on the difference scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shift {
    Constant(f64),
    PerUnit(Vec<f64>),
}

impl Shift {
    fn values(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Shift::Constant(c) => Ok(vec![*c; n]),
            Shift::PerUnit(v) if v.len() == n => Ok(v.clone()),
            Shift::PerUnit(v) => Err(Error::DimensionMismatch(format!(
                "{} per-unit shifts for {n} rows",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffMethod {
    Reg,
    Ht,
    Dr,
}

impl FromStr for DiffMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reg" => Ok(DiffMethod::Reg),
            "ht" => Ok(DiffMethod::Ht),
            "dr" => Ok(DiffMethod::Dr),
            other => Err(Error::InvalidArgument(format!(
                "unknown difference-scale estimator `{other}`"
            ))),
        }
    }
}

/// Average effect with difference-scale sensitivity parameters: the
/// classical estimate minus `mean{Z delta0 + (1 - Z) delta1}`.
pub fn ate_diff_scale(
    ds: &Dataset,
    fits: &NuisanceFits,
    delta1: &Shift,
    delta0: &Shift,
    method: DiffMethod,
) -> Result<f64> {
    let n = ds.n();
    let d1 = delta1.values(n)?;
    let d0 = delta0.values(n)?;
    let unit = SensitivitySpec::unconfounded();
    let p = Prepared::new(ds, fits, &unit)?;
    let classical = match method {
        // with eps = 1 the projective form is mean(mu1 - mu0)
        DiffMethod::Reg => p.ate(Method::Proj),
        DiffMethod::Ht => p.ate(Method::Ht),
        DiffMethod::Dr => p.ate(Method::Dr),
    };
    let correction = (0..n)
        .map(|i| p.z[i] * d0[i] + (1.0 - p.z[i]) * d1[i])
        .sum::<f64>()
        / n as f64;
    Ok(classical - correction)
}

/// Plug-in estimate of the sampling variance of the DR estimator, built
/// from the efficiency bound with homoscedastic arm residual variances.
pub fn ate_variance_plugin(ds: &Dataset, fits: &NuisanceFits, eps: &SensitivitySpec) -> Result<f64> {
    let p = Prepared::new(ds, fits, eps)?;
    let (v1, v0) = p.residual_variances();
    let n = p.n() as f64;
    let mut resid_part = 0.0;
    let mut second = 0.0;
    let mut first = 0.0;
    for i in 0..p.n() {
        let e = p.e[i];
        let (w1, w0) = p.w(i);
        resid_part += w1 * w1 / e * v1 + w0 * w0 / (1.0 - e) * v0;
        let a = p.mu1[i] - p.mu0[i] * p.eps0[i];
        let b = p.mu1[i] / p.eps1[i] - p.mu0[i];
        second += e * a * a + (1.0 - e) * b * b;
        first += e * a + (1.0 - e) * b;
    }
    let tau = first / n;
    let between = (second / n - tau * tau).max(0.0);
    Ok((resid_part / n + between) / n)
}
