//! Result rows shared by all commands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inference::BootstrapResult;

/// One estimand x estimator x `(eps1, eps0)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimand: String,
    pub estimator: String,
    /// Numeric value, or `fn` for a covariate-dependent parameter.
    pub eps1: String,
    pub eps0: String,
    pub est: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub pvalue: f64,
}

impl EstimateRecord {
    pub const HEADER: [&'static str; 9] = [
        "estimand", "estimator", "eps1", "eps0", "est", "se", "ci_lo", "ci_hi", "pvalue",
    ];

    pub fn from_bootstrap(
        estimand: &str,
        estimator: &str,
        eps1: String,
        eps0: String,
        b: &BootstrapResult,
    ) -> Self {
        Self {
            estimand: estimand.to_string(),
            estimator: estimator.to_string(),
            eps1,
            eps0,
            est: b.estimate,
            se: b.se,
            ci_lo: b.ci_lo,
            ci_hi: b.ci_hi,
            pvalue: b.pvalue,
        }
    }
}

pub fn write_records_csv(path: impl AsRef<Path>, records: &[EstimateRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record(EstimateRecord::HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<EstimateRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
