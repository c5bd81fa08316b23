//! Sensitivity parameters: the ratio between the observed and the
//! counterfactual conditional mean of a potential outcome given covariates.
//!
//! Each arm's parameter is an [`EpsFn`] evaluated per unit. `eps1` compares
//! `E{Y(1) | Z=1, X}` with `E{Y(1) | Z=0, X}` and `eps0` compares
//! `E{Y(0) | Z=1, X}` with `E{Y(0) | Z=0, X}`; both equal to one recovers
//! the unconfounded estimators.

use std::fmt;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EpsFn {
    Constant(f64),
    /// `exp(alpha + beta' x)`.
    LogLinear { alpha: f64, beta: Vec<f64> },
    /// Arbitrary per-unit values, aligned with the dataset rows.
    PerUnit(Vec<f64>),
}

impl EpsFn {
    pub fn one() -> Self {
        EpsFn::Constant(1.0)
    }

    pub fn evaluate(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let n = x.nrows();
        let values = match self {
            EpsFn::Constant(c) => vec![*c; n],
            EpsFn::LogLinear { alpha, beta } => {
                if beta.len() != x.ncols() {
                    return Err(Error::DimensionMismatch(format!(
                        "log-linear sensitivity has {} slopes for {} covariates",
                        beta.len(),
                        x.ncols()
                    )));
                }
                x.rows()
                    .into_iter()
                    .map(|r| {
                        let lin: f64 = r.iter().zip(beta).map(|(a, b)| a * b).sum();
                        (alpha + lin).exp()
                    })
                    .collect()
            }
            EpsFn::PerUnit(v) => {
                if v.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "{} per-unit sensitivity values for {n} rows",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidArgument(format!(
                "sensitivity parameter must be positive and finite, got {v} at row {}",
                i + 1
            )));
        }
        Ok(values)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            EpsFn::Constant(c) => Some(*c),
            _ => None,
        }
    }

    /// Column label for result tables: the value, or `fn`.
    pub fn label(&self) -> String {
        match self {
            EpsFn::Constant(c) => format!("{c}"),
            _ => "fn".to_string(),
        }
    }
}

impl fmt::Display for EpsFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    pub eps1: EpsFn,
    pub eps0: EpsFn,
}

impl SensitivitySpec {
    pub fn new(eps1: EpsFn, eps0: EpsFn) -> Self {
        Self { eps1, eps0 }
    }

    pub fn constant(eps1: f64, eps0: f64) -> Self {
        Self::new(EpsFn::Constant(eps1), EpsFn::Constant(eps0))
    }

    pub fn unconfounded() -> Self {
        Self::constant(1.0, 1.0)
    }

    pub fn evaluate(&self, x: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.eps1.evaluate(x)?, self.eps0.evaluate(x)?))
    }
}
