//! Risk ratio, odds ratio and their logarithms by plugging the arm means
//! into `g(mu1, mu0)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ate::{Arm, Method, Prepared};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::NuisanceFits;
use crate::sensitivity::SensitivitySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    Rr,
    Or,
    LogRr,
    LogOr,
}

impl RatioKind {
    pub fn name(&self) -> &'static str {
        match self {
            RatioKind::Rr => "rr",
            RatioKind::Or => "or",
            RatioKind::LogRr => "log_rr",
            RatioKind::LogOr => "log_or",
        }
    }

    /// The same ratio on the log scale, or not.
    pub fn with_log(self, log: bool) -> Self {
        match (self, log) {
            (RatioKind::Rr | RatioKind::LogRr, true) => RatioKind::LogRr,
            (RatioKind::Rr | RatioKind::LogRr, false) => RatioKind::Rr,
            (RatioKind::Or | RatioKind::LogOr, true) => RatioKind::LogOr,
            (RatioKind::Or | RatioKind::LogOr, false) => RatioKind::Or,
        }
    }

    fn is_odds(&self) -> bool {
        matches!(self, RatioKind::Or | RatioKind::LogOr)
    }

    fn is_log(&self) -> bool {
        matches!(self, RatioKind::LogRr | RatioKind::LogOr)
    }
}

impl fmt::Display for RatioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RatioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rr" => Ok(RatioKind::Rr),
            "or" => Ok(RatioKind::Or),
            "log_rr" => Ok(RatioKind::LogRr),
            "log_or" => Ok(RatioKind::LogOr),
            other => Err(Error::InvalidArgument(format!("unknown ratio `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioEstimate {
    pub value: f64,
    pub mu1: f64,
    pub mu0: f64,
    pub warnings: Vec<String>,
}

/// `g(mu1, mu0)` for the requested ratio.
pub fn ratio_from_means(kind: RatioKind, mu1: f64, mu0: f64) -> Result<f64> {
    let bad = |arm: &str, v: f64, why: &str| {
        Err(Error::Estimation(format!(
            "{} undefined: {arm} arm mean {v} {why}",
            kind.name()
        )))
    };
    let (a, b) = if kind.is_odds() {
        for (arm, v) in [("treated", mu1), ("control", mu0)] {
            if v == 0.0 || v == 1.0 {
                return bad(arm, v, "is 0 or 1");
            }
        }
        (mu1 / (1.0 - mu1), mu0 / (1.0 - mu0))
    } else {
        if mu0 == 0.0 {
            return bad("control", mu0, "is 0");
        }
        (mu1, mu0)
    };
    let r = a / b;
    if kind.is_log() {
        if !(r > 0.0) {
            let (arm, v) = if a <= 0.0 { ("treated", mu1) } else { ("control", mu0) };
            return bad(arm, v, "gives a non-positive ratio");
        }
        Ok(r.ln())
    } else {
        Ok(r)
    }
}

pub fn ratio_effect(
    kind: RatioKind,
    method: Method,
    ds: &Dataset,
    fits: &NuisanceFits,
    eps: &SensitivitySpec,
) -> Result<RatioEstimate> {
    let p = Prepared::new(ds, fits, eps)?;
    let mu1 = p.potential_mean(Arm::Treated, method);
    let mu0 = p.potential_mean(Arm::Control, method);
    let mut warnings = Vec::new();
    for (arm, v) in [("treated", mu1), ("control", mu0)] {
        if !(0.0..=1.0).contains(&v) {
            warnings.push(format!("{arm} arm mean {v} lies outside [0, 1]"));
        }
    }
    Ok(RatioEstimate {
        value: ratio_from_means(kind, mu1, mu0)?,
        mu1,
        mu0,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn arithmetic() {
        assert!((ratio_from_means(RatioKind::Rr, 0.6, 0.3).unwrap() - 2.0).abs() < 1e-15);
        assert!((ratio_from_means(RatioKind::Or, 0.6, 0.3).unwrap() - 3.5).abs() < 1e-14);
        assert!(ratio_from_means(RatioKind::Rr, 0.6, 0.0).is_err());
        assert!(ratio_from_means(RatioKind::Or, 1.0, 0.3).is_err());
        assert!(ratio_from_means(RatioKind::LogRr, -0.1, 0.3).is_err());
    }

    #[test]
    fn proj_with_constant_arm_fits() {
        let ds = Dataset::from_parts(
            array![[1.0], [1.0], [1.0], [0.0], [0.0], [0.0]],
            vec![1, 1, 1, 0, 0, 0],
            vec![1.0, 1.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        let fits = NuisanceFits::from_values(vec![0.5; 6], vec![0.6; 6], vec![0.3; 6]).unwrap();
        let eps = SensitivitySpec::unconfounded();
        let rr = ratio_effect(RatioKind::Rr, Method::Proj, &ds, &fits, &eps).unwrap();
        assert!((rr.value - 2.0).abs() < 1e-15);
        let or = ratio_effect(RatioKind::Or, Method::Proj, &ds, &fits, &eps).unwrap();
        assert!((or.value - 3.5).abs() < 1e-14);
        assert!(or.warnings.is_empty());
    }

    #[test]
    fn log_consistency_and_relabeling() {
        for (m1, m0) in [(0.2, 0.7), (0.55, 0.45), (0.9, 0.1)] {
            let rr = ratio_from_means(RatioKind::Rr, m1, m0).unwrap();
            let lrr = ratio_from_means(RatioKind::LogRr, m1, m0).unwrap();
            assert!((lrr.exp() - rr).abs() < 1e-12);
            let or = ratio_from_means(RatioKind::Or, m1, m0).unwrap();
            let flipped = ratio_from_means(RatioKind::Or, 1.0 - m1, 1.0 - m0).unwrap();
            assert!((or * flipped - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("log_or".parse::<RatioKind>().unwrap(), RatioKind::LogOr);
        assert_eq!(RatioKind::Rr.with_log(true), RatioKind::LogRr);
        assert!("risk".parse::<RatioKind>().is_err());
    }
}
