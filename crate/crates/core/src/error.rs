use std::fmt;

use thiserror::Error;

use crate::dataset::Violation;
use crate::glm::GlmFit;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("cannot parse `{value}` as a number at row {row}, column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid dataset: {}", ViolationList(.0))]
    Validation(Vec<Violation>),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("IRLS did not converge after {} iterations", .partial.iterations)]
    NonConvergence { partial: Box<GlmFit> },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("unstable resampling: {failed} of {n_boot} bootstrap replicates failed")]
    UnstableResampling { failed: usize, n_boot: usize },
}

/// Violations printed before the rest are summarized as a count.
const SHOWN: usize = 8;

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().take(SHOWN).enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        if self.0.len() > SHOWN {
            write!(f, "; and {} more", self.0.len() - SHOWN)?;
        }
        Ok(())
    }
}
