//! Average effect on the treated units, `E(Y | Z=1) - E{Y(0) | Z=1}`.
//!
//! Only `eps0` enters. The treated mean is the plain arm average; the
//! counterfactual control mean is estimated by regression, weighting with
//! the fitted odds `o = e/(1 - e)`, or their augmented combinations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ate::{sign_warning, Bounds};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::NuisanceFits;
use crate::sensitivity::EpsFn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttMethod {
    Reg,
    Ht,
    Hajek,
    Dr,
    Dr2,
}

impl AttMethod {
    pub const ALL: [AttMethod; 5] = [
        AttMethod::Reg,
        AttMethod::Ht,
        AttMethod::Hajek,
        AttMethod::Dr,
        AttMethod::Dr2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttMethod::Reg => "reg",
            AttMethod::Ht => "ht",
            AttMethod::Hajek => "hajek",
            AttMethod::Dr => "dr",
            AttMethod::Dr2 => "dr2",
        }
    }
}

impl fmt::Display for AttMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttMethod::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ATT estimator `{s}`")))
    }
}

struct AttPrepared<'a> {
    z: Vec<f64>,
    y: &'a [f64],
    e: &'a [f64],
    mu1: &'a [f64],
    mu0: &'a [f64],
    eps0: Vec<f64>,
    n1: f64,
}

impl<'a> AttPrepared<'a> {
    fn new(ds: &'a Dataset, fits: &'a NuisanceFits, eps0: &EpsFn) -> Result<Self> {
        fits.check_against(ds)?;
        let eps0 = eps0.evaluate(ds.x().view())?;
        let z: Vec<f64> = (0..ds.n()).map(|i| ds.zf(i)).collect();
        let n1: f64 = z.iter().sum();
        if n1 == 0.0 {
            return Err(Error::Estimation("no treated units".into()));
        }
        Ok(Self {
            z,
            y: ds.y(),
            e: &fits.ehat,
            mu1: &fits.mu1hat,
            mu0: &fits.mu0hat,
            eps0,
            n1,
        })
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn sum(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.n()).map(f).sum()
    }

    fn odds(&self, i: usize) -> f64 {
        self.e[i] / (1.0 - self.e[i])
    }

    fn treated_mean(&self) -> f64 {
        self.sum(|i| self.z[i] * self.y[i]) / self.n1
    }

    fn control_mean(&self, method: AttMethod) -> f64 {
        let (z, y, mu0, eps0) = (&self.z, self.y, self.mu0, &self.eps0);
        let reg = || self.sum(|i| z[i] * eps0[i] * mu0[i]) / self.n1;
        let odds_den = || self.sum(|i| self.odds(i) * (1.0 - z[i]));
        match method {
            AttMethod::Reg => reg(),
            AttMethod::Ht => self.sum(|i| eps0[i] * self.odds(i) * (1.0 - z[i]) * y[i]) / self.n1,
            AttMethod::Hajek => {
                self.sum(|i| eps0[i] * self.odds(i) * (1.0 - z[i]) * y[i]) / odds_den()
            }
            AttMethod::Dr => {
                reg()
                    + self.sum(|i| eps0[i] * self.odds(i) * (1.0 - z[i]) * (y[i] - mu0[i]))
                        / self.n1
            }
            AttMethod::Dr2 => {
                reg()
                    + self.sum(|i| eps0[i] * self.odds(i) * (1.0 - z[i]) * (y[i] - mu0[i]))
                        / odds_den()
            }
        }
    }

    /// The weighting form of the DR counterfactual mean.
    fn control_mean_dr_ht(&self) -> f64 {
        self.control_mean(AttMethod::Ht)
            + self.sum(|i| self.eps0[i] * (self.z[i] - self.e[i]) * self.mu0[i] / (1.0 - self.e[i]))
                / self.n1
    }

    fn att(&self, method: AttMethod) -> f64 {
        self.treated_mean() - self.control_mean(method)
    }
}

/// `E(Y | Z=1)` estimated by the treated-arm mean.
pub fn att_treated_mean(ds: &Dataset) -> Result<f64> {
    let n1 = ds.count_level(1);
    if n1 == 0 {
        return Err(Error::Estimation("no treated units".into()));
    }
    Ok((0..ds.n()).map(|i| ds.zf(i) * ds.y()[i]).sum::<f64>() / n1 as f64)
}

/// Estimate of `E{Y(0) | Z=1}`.
pub fn att_control_mean(
    method: AttMethod,
    ds: &Dataset,
    fits: &NuisanceFits,
    eps0: &EpsFn,
) -> Result<f64> {
    Ok(AttPrepared::new(ds, fits, eps0)?.control_mean(method))
}

pub fn att(method: AttMethod, ds: &Dataset, fits: &NuisanceFits, eps0: &EpsFn) -> Result<f64> {
    Ok(AttPrepared::new(ds, fits, eps0)?.att(method))
}

/// The regression-augmented and weighting-augmented forms of the DR
/// counterfactual mean; they are algebraically identical.
pub fn att_dr_forms(ds: &Dataset, fits: &NuisanceFits, eps0: &EpsFn) -> Result<(f64, f64)> {
    let p = AttPrepared::new(ds, fits, eps0)?;
    Ok((p.control_mean(AttMethod::Dr), p.control_mean_dr_ht()))
}

/// Worst-case bounds for a range of `eps0`: the lower bound uses the upper
/// end and vice versa (sorted for non-positive outcomes).
pub fn att_bounds(
    ds: &Dataset,
    fits: &NuisanceFits,
    eps0_range: (f64, f64),
    method: AttMethod,
) -> Result<Bounds> {
    let (lo, hi) = eps0_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eps0 range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
        )));
    }
    let a = att(method, ds, fits, &EpsFn::Constant(hi))?;
    let b = att(method, ds, fits, &EpsFn::Constant(lo))?;
    Ok(Bounds {
        lower: a.min(b),
        upper: a.max(b),
        warnings: sign_warning(ds).into_iter().collect(),
    })
}

/// Plug-in efficiency-bound variance of the DR estimator of the effect on
/// the treated, with `pr(Z=1)` estimated by `n1/n` and homoscedastic arm
/// residual variances.
pub fn att_variance_plugin(ds: &Dataset, fits: &NuisanceFits, eps0: &EpsFn) -> Result<f64> {
    let p = AttPrepared::new(ds, fits, eps0)?;
    if p.n1 == p.n() as f64 {
        return Err(Error::Estimation("no control units".into()));
    }
    let n = p.n() as f64;
    let pr1 = p.n1 / n;
    let tau = p.att(AttMethod::Dr);
    let mut acc = [(0.0, 0.0); 2];
    for i in 0..p.n() {
        let (r, k) = if p.z[i] == 1.0 {
            (p.y[i] - p.mu1[i], 0)
        } else {
            (p.y[i] - p.mu0[i], 1)
        };
        acc[k].0 += r * r;
        acc[k].1 += 1.0;
    }
    let (v1, v0) = (acc[0].0 / acc[0].1, acc[1].0 / acc[1].1);
    let total = p.sum(|i| {
        let e = p.e[i];
        let eps = p.eps0[i];
        let gap = p.mu1[i] - eps * p.mu0[i] - tau;
        e * v1 + e * e * eps * eps * v0 / (1.0 - e) + e * gap * gap
    });
    Ok(total / n / (pr1 * pr1) / n)
}
