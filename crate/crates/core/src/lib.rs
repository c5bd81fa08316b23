//! Sensitivity analysis for average causal effects under unmeasured
//! confounding, with ratio-scale sensitivity parameters.

pub mod ate;
pub mod att;
pub mod calibration;
pub mod contour;
pub mod dataset;
pub mod error;
pub mod glm;
pub mod inference;
mod linalg;
pub mod multi;
pub mod nuisance;
pub mod ratio;
pub mod records;
pub mod sensitivity;
pub mod simulation;
pub mod stats;
pub mod survival;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
