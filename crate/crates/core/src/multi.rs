//! Potential means and contrasts for a treatment with levels `1..=K`.
//!
//! `eps[k][l]` is the ratio of the mean of `Y(k)` among units at level `k`
//! to its mean among units at level `l`, so the diagonal is fixed at one.
//! Levels are 1-based in the public API.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glm::{fit_glm, Family, GlmConfig, GlmFit};
use crate::nuisance::{fit_outcome_arm, OutcomeScale};
use crate::sensitivity::EpsFn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsMatrix {
    entries: Vec<Vec<EpsFn>>,
}

impl EpsMatrix {
    /// All entries equal to one.
    pub fn ones(k: usize) -> Self {
        Self {
            entries: vec![vec![EpsFn::one(); k]; k],
        }
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    /// Sets `eps[k][l]` for levels `k != l`.
    pub fn set(&mut self, k: usize, l: usize, eps: EpsFn) -> Result<()> {
        let kk = self.k();
        if k == 0 || l == 0 || k > kk || l > kk {
            return Err(Error::InvalidArgument(format!(
                "levels ({k}, {l}) out of range 1..={kk}"
            )));
        }
        if k == l {
            return Err(Error::InvalidArgument(format!(
                "diagonal entry ({k}, {k}) is fixed at 1"
            )));
        }
        if let EpsFn::Constant(c) = eps {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sensitivity parameter ({k}, {l}) must be positive, got {c}"
                )));
            }
        }
        self.entries[k - 1][l - 1] = eps;
        Ok(())
    }

    pub fn get(&self, k: usize, l: usize) -> &EpsFn {
        &self.entries[k - 1][l - 1]
    }

    /// Per-unit values, indexed `[k][l][i]` with 0-based levels.
    fn evaluate(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Vec<Vec<f64>>>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(|e| e.evaluate(x)).collect())
            .collect()
    }
}

/// Contrast weights over the `K` levels, summing to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    c: Vec<f64>,
}

impl Contrast {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(c: Vec<f64>) -> Result<Self> {
        let s: f64 = c.iter().sum();
        if !(s.abs() <= Self::SUM_TOL) {
            return Err(Error::InvalidArgument(format!(
                "contrast weights must sum to 0, got {s}"
            )));
        }
        Ok(Self { c })
    }

    /// `1` at level `a`, `-1` at level `b`.
    pub fn pairwise(k: usize, a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 || a > k || b > k || a == b {
            return Err(Error::InvalidArgument(format!(
                "pairwise contrast needs distinct levels in 1..={k}, got ({a}, {b})"
            )));
        }
        let mut c = vec![0.0; k];
        c[a - 1] = 1.0;
        c[b - 1] = -1.0;
        Ok(Self { c })
    }

    pub fn weights(&self) -> &[f64] {
        &self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiMethod {
    Reg,
    Ht,
    Dr,
}

impl MultiMethod {
    pub const ALL: [MultiMethod; 3] = [MultiMethod::Reg, MultiMethod::Ht, MultiMethod::Dr];

    pub fn name(&self) -> &'static str {
        match self {
            MultiMethod::Reg => "reg",
            MultiMethod::Ht => "ht",
            MultiMethod::Dr => "dr",
        }
    }
}

impl fmt::Display for MultiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MultiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MultiMethod::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown multi-level estimator `{s}`")))
    }
}

/// Generalized propensity scores and per-level outcome means, both `n x K`
/// with column `k - 1` for level `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiNuisance {
    pub gps: Array2<f64>,
    pub mu: Array2<f64>,
    pub gps_model: Option<GlmFit>,
    pub warnings: Vec<String>,
}

impl MultiNuisance {
    pub fn from_values(gps: Array2<f64>, mu: Array2<f64>) -> Result<Self> {
        if gps.dim() != mu.dim() {
            return Err(Error::DimensionMismatch(format!(
                "propensity matrix is {:?}, outcome matrix is {:?}",
                gps.dim(),
                mu.dim()
            )));
        }
        if gps.ncols() < 2 {
            return Err(Error::InvalidArgument("need at least 2 treatment levels".into()));
        }
        if let Some(v) = gps.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "generalized propensity score {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            gps,
            mu,
            gps_model: None,
            warnings: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.gps.ncols()
    }
}

/// Multinomial-logit generalized propensity score and per-level outcome
/// regressions on all covariates.
pub fn fit_multi_nuisances(
    ds: &Dataset,
    outcome_family: Family,
    glm: &GlmConfig,
) -> Result<MultiNuisance> {
    let k = ds.z().iter().copied().max().unwrap_or(0);
    if k < 2 {
        return Err(Error::InvalidArgument("need at least 2 treatment levels".into()));
    }
    for level in 1..=k {
        if ds.count_level(level) == 0 {
            return Err(Error::Estimation(format!("treatment level {level} has no units")));
        }
    }
    let x = ds.x().view();
    let zf: Vec<f64> = ds.z().iter().map(|&v| v as f64).collect();
    let fit = fit_glm(x, &zf, Family::Multinomial { levels: k }, glm)?;
    let gps = fit.predict_proba(x)?;
    let mut warnings: Vec<String> = fit.warnings.iter().map(|w| format!("propensity model: {w}")).collect();
    let mut mu = Array2::zeros((ds.n(), k));
    for level in 1..=k {
        let (pred, f) = fit_outcome_arm(
            x,
            ds.z(),
            ds.y(),
            level,
            outcome_family,
            OutcomeScale::Raw,
            glm,
        )?;
        warnings.extend(f.warnings.iter().map(|w| format!("level {level} outcome model: {w}")));
        mu.column_mut(level - 1).assign(&ndarray::Array1::from(pred));
    }
    Ok(MultiNuisance {
        gps,
        mu,
        gps_model: Some(fit),
        warnings,
    })
}

fn check_inputs(ds: &Dataset, nuis: &MultiNuisance, eps: &EpsMatrix) -> Result<()> {
    if nuis.gps.nrows() != ds.n() {
        return Err(Error::DimensionMismatch(format!(
            "nuisance fits have {} rows, dataset has {}",
            nuis.gps.nrows(),
            ds.n()
        )));
    }
    if eps.k() != nuis.k() {
        return Err(Error::DimensionMismatch(format!(
            "sensitivity matrix is {0}x{0} but there are {1} levels",
            eps.k(),
            nuis.k()
        )));
    }
    if let Some((i, &z)) = ds.z().iter().enumerate().find(|(_, &z)| z == 0 || z > nuis.k()) {
        return Err(Error::InvalidArgument(format!(
            "treatment level {z} at row {} outside 1..={}",
            i + 1,
            nuis.k()
        )));
    }
    Ok(())
}

/// Estimate of `E{Y(k)}`.
pub fn multi_potential_mean(
    level: usize,
    method: MultiMethod,
    ds: &Dataset,
    nuis: &MultiNuisance,
    eps: &EpsMatrix,
) -> Result<f64> {
    check_inputs(ds, nuis, eps)?;
    let kk = nuis.k();
    if level == 0 || level > kk {
        return Err(Error::InvalidArgument(format!("level {level} outside 1..={kk}")));
    }
    if ds.count_level(level) == 0 {
        return Err(Error::Estimation(format!("treatment level {level} has no units")));
    }
    let k = level - 1;
    let ev = eps.evaluate(ds.x().view())?;
    let n = ds.n();
    let (z, y) = (ds.z(), ds.y());

    let reg = || {
        (0..n)
            .map(|i| nuis.mu[[i, k]] / ev[k][z[i] - 1][i])
            .sum::<f64>()
            / n as f64
    };
    // sum_l e_l / eps_{k,l} over e_k, for a unit at level k
    let weight = |i: usize| -> Result<f64> {
        let ek = nuis.gps[[i, k]];
        if ek <= 0.0 {
            return Err(Error::Estimation(format!(
                "generalized propensity score for level {level} is 0 at row {}",
                i + 1
            )));
        }
        Ok((0..kk).map(|l| nuis.gps[[i, l]] / ev[k][l][i]).sum::<f64>() / ek)
    };
    let weighted = |f: &dyn Fn(usize) -> f64| -> Result<f64> {
        let mut s = 0.0;
        for i in (0..n).filter(|&i| z[i] == level) {
            s += weight(i)? * f(i);
        }
        Ok(s / n as f64)
    };
    match method {
        MultiMethod::Reg => Ok(reg()),
        MultiMethod::Ht => weighted(&|i| y[i]),
        MultiMethod::Dr => Ok(reg() + weighted(&|i| y[i] - nuis.mu[[i, k]])?),
    }
}

/// `sum_k c_k E{Y(k)}`.
pub fn multi_contrast(
    c: &Contrast,
    method: MultiMethod,
    ds: &Dataset,
    nuis: &MultiNuisance,
    eps: &EpsMatrix,
) -> Result<f64> {
    if c.weights().len() != nuis.k() {
        return Err(Error::DimensionMismatch(format!(
            "contrast has {} weights for {} levels",
            c.weights().len(),
            nuis.k()
        )));
    }
    let mut total = 0.0;
    for (k, &ck) in c.weights().iter().enumerate() {
        if ck != 0.0 {
            total += ck * multi_potential_mean(k + 1, method, ds, nuis, eps)?;
        }
    }
    Ok(total)
}
