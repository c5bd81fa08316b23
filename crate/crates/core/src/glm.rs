//! Generalized linear models for the nuisance fits.
//!
//! Gaussian (identity link) models are solved exactly by least squares.
//! Binomial (logit) and multinomial (softmax, reference level 1) models are
//! solved by Newton iterations on the log-likelihood, which for canonical
//! links is the same as iteratively reweighted least squares. An intercept
//! is always prepended; columns that are collinear with the ones before
//! them are dropped and keep a zero coefficient.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative pivot threshold for the rank check.
pub const RANK_TOL: f64 = 1e-10;
/// Linear-predictor magnitude beyond which a fit is flagged as
/// quasi-separated.
pub const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
    /// `levels` classes labelled `1..=levels` in the response.
    Multinomial { levels: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
            Family::Multinomial { .. } => "multinomial",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "binomial" => Ok(Family::Binomial),
            other => Err(Error::InvalidArgument(format!(
                "unknown family `{other}` (expected gaussian or binomial)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmConfig {
    pub max_iter: usize,
    /// Convergence threshold on the largest absolute coefficient change.
    pub tol: f64,
}

impl Default for GlmConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub family: Family,
    /// `(p + 1) x m` coefficients, intercept first; `m = 1` except for the
    /// multinomial family where column `k` holds level `k + 2` against
    /// level 1.
    pub coefficients: Array2<f64>,
    /// Which design columns (intercept first) survived the rank check.
    pub kept: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    pub warnings: Vec<String>,
}

impl GlmFit {
    /// Number of covariates (excluding the intercept) the model expects.
    pub fn n_features(&self) -> usize {
        self.coefficients.nrows() - 1
    }

    /// Coefficient vector for single-response families.
    pub fn coef(&self) -> ArrayView1<'_, f64> {
        self.coefficients.column(0)
    }

    /// Linear predictors, one column per non-reference response.
    pub fn linear_predictor(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} covariates, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let mut eta = x.dot(&self.coefficients.slice(s![1.., ..]));
        let intercept = self.coefficients.row(0);
        for mut row in eta.rows_mut() {
            row += &intercept;
        }
        Ok(eta)
    }

    /// Mean-scale predictions for gaussian and binomial fits.
    pub fn predict_mean(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let eta = self.linear_predictor(x)?.column(0).to_owned();
        match self.family {
            Family::Gaussian => Ok(eta),
            Family::Binomial => Ok(eta.mapv(logistic)),
            Family::Multinomial { .. } => Err(Error::InvalidArgument(
                "multinomial fits predict class probabilities; use predict_proba".into(),
            )),
        }
    }

    /// `n x K` class probabilities (column `k` is level `k + 1`).
    ///
    /// For a binomial fit this is the two-column matrix `(1 - p, p)`.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let eta = self.linear_predictor(x)?;
        match self.family {
            Family::Gaussian => Err(Error::InvalidArgument(
                "gaussian fits have no class probabilities".into(),
            )),
            Family::Binomial => {
                let mut out = Array2::zeros((x.nrows(), 2));
                for (i, &e) in eta.column(0).iter().enumerate() {
                    let p = logistic(e);
                    out[[i, 0]] = 1.0 - p;
                    out[[i, 1]] = p;
                }
                Ok(out)
            }
            Family::Multinomial { levels } => {
                let mut out = Array2::zeros((x.nrows(), levels));
                for (i, row) in eta.rows().into_iter().enumerate() {
                    let probs = softmax_with_reference(row);
                    out.row_mut(i).assign(&Array1::from(probs));
                }
                Ok(out)
            }
        }
    }
}

#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softmax_with_reference(eta: ArrayView1<'_, f64>) -> Vec<f64> {
    let max = eta.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut probs = Vec::with_capacity(eta.len() + 1);
    probs.push((-max).exp());
    probs.extend(eta.iter().map(|&v| (v - max).exp()));
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

fn design(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut d = Array2::ones((x.nrows(), x.ncols() + 1));
    d.slice_mut(s![.., 1..]).assign(&x);
    d
}

/// Fits a GLM of `y` on `[1, x]`.
pub fn fit_glm(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    family: Family,
    config: &GlmConfig,
) -> Result<GlmFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("cannot fit a model to zero rows".into()));
    }
    match family {
        Family::Binomial => {
            if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "binomial response must be 0/1, found {bad}"
                )));
            }
        }
        Family::Multinomial { levels } => {
            if levels < 2 {
                return Err(Error::InvalidArgument(
                    "multinomial family needs at least 2 levels".into(),
                ));
            }
            if let Some(bad) = y
                .iter()
                .find(|&&v| v.fract() != 0.0 || v < 1.0 || v > levels as f64)
            {
                return Err(Error::InvalidArgument(format!(
                    "multinomial response must be in 1..={levels}, found {bad}"
                )));
            }
        }
        Family::Gaussian => {}
    }

    let full = design(x);
    let kept_idx = linalg::independent_columns(full.view(), RANK_TOL);
    let mut kept = vec![false; full.ncols()];
    for &j in &kept_idx {
        kept[j] = true;
    }
    let mut warnings = Vec::new();
    let dropped: Vec<usize> = (1..full.ncols()).filter(|&j| !kept[j]).collect();
    if !dropped.is_empty() {
        let cols: Vec<String> = dropped.iter().map(|j| format!("x{j}")).collect();
        warnings.push(format!(
            "design is rank deficient; collinear column(s) {} dropped",
            cols.join(", ")
        ));
    }
    let reduced = full.select(Axis(1), &kept_idx);

    let m = match family {
        Family::Multinomial { levels } => levels - 1,
        _ => 1,
    };
    let expand = |beta: &[f64]| -> Array2<f64> {
        let q = kept_idx.len();
        let mut coef = Array2::zeros((full.ncols(), m));
        for k in 0..m {
            for (r, &j) in kept_idx.iter().enumerate() {
                coef[[j, k]] = beta[k * q + r];
            }
        }
        coef
    };

    let mut fit = match family {
        Family::Gaussian => {
            let beta = linalg::least_squares(reduced.view(), y).ok_or_else(|| {
                Error::Estimation("least-squares solve failed on a full-rank design".into())
            })?;
            let fitted = reduced.dot(&Array1::from(beta.clone()));
            let deviance = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            GlmFit {
                family,
                coefficients: expand(&beta),
                kept,
                converged: true,
                iterations: 1,
                deviance,
                warnings: Vec::new(),
            }
        }
        Family::Binomial => {
            let (beta, converged, iterations, deviance) = newton_binomial(&reduced, y, config);
            let fit = GlmFit {
                family,
                coefficients: expand(&beta),
                kept,
                converged,
                iterations,
                deviance,
                warnings: Vec::new(),
            };
            if !converged {
                return Err(Error::NonConvergence {
                    partial: Box::new(fit),
                });
            }
            fit
        }
        Family::Multinomial { levels } => {
            let (beta, converged, iterations, deviance) =
                newton_multinomial(&reduced, y, levels, config);
            let fit = GlmFit {
                family,
                coefficients: expand(&beta),
                kept,
                converged,
                iterations,
                deviance,
                warnings: Vec::new(),
            };
            if !converged {
                return Err(Error::NonConvergence {
                    partial: Box::new(fit),
                });
            }
            fit
        }
    };

    if family != Family::Gaussian {
        let eta = fit.linear_predictor(x)?;
        if eta.iter().any(|v| v.abs() > SEPARATION_ETA) {
            warnings.push(format!(
                "linear predictor exceeds {SEPARATION_ETA} in magnitude; possible quasi-separation"
            ));
        }
    }
    fit.warnings = warnings;
    Ok(fit)
}

fn binomial_deviance(y: &[f64], eta: &Array1<f64>) -> f64 {
    // -2 log-likelihood written in terms of eta to avoid log(0)
    let mut dev = 0.0;
    for (&yi, &e) in y.iter().zip(eta.iter()) {
        let log1p_exp = if e > 0.0 {
            e + (-e).exp().ln_1p()
        } else {
            e.exp().ln_1p()
        };
        dev += log1p_exp - yi * e;
    }
    2.0 * dev
}

fn newton_binomial(d: &Array2<f64>, y: &[f64], cfg: &GlmConfig) -> (Vec<f64>, bool, usize, f64) {
    let (n, q) = d.dim();
    let mut beta = vec![0.0; q];
    let mut eta = Array1::zeros(n);
    let mut dev = binomial_deviance(y, &eta);
    for iter in 1..=cfg.max_iter {
        let mut h = Array2::<f64>::zeros((q, q));
        let mut g = vec![0.0; q];
        for i in 0..n {
            let p = logistic(eta[i]);
            let w = p * (1.0 - p);
            let r = y[i] - p;
            let row = d.row(i);
            for a in 0..q {
                g[a] += row[a] * r;
                let wa = w * row[a];
                for b in 0..=a {
                    h[[a, b]] += wa * row[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                h[[b, a]] = h[[a, b]];
            }
        }
        let Some(step) = linalg::cholesky_solve(&h, &g) else {
            return (beta, false, iter, dev);
        };
        let mut scale = 1.0;
        let mut candidate;
        let mut cand_eta;
        let mut cand_dev;
        loop {
            candidate = beta
                .iter()
                .zip(&step)
                .map(|(b, s)| b + scale * s)
                .collect::<Vec<_>>();
            cand_eta = d.dot(&Array1::from(candidate.clone()));
            cand_dev = binomial_deviance(y, &cand_eta);
            if cand_dev <= dev * (1.0 + 1e-12) + 1e-12 || scale < 1e-3 {
                break;
            }
            scale *= 0.5;
        }
        let change = beta
            .iter()
            .zip(&candidate)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = candidate;
        eta = cand_eta;
        dev = cand_dev;
        if change < cfg.tol {
            return (beta, true, iter, dev);
        }
    }
    (beta, false, cfg.max_iter, dev)
}

fn multinomial_probs(d: &Array2<f64>, beta: &[f64], m: usize) -> Array2<f64> {
    let (n, q) = d.dim();
    let b = Array2::from_shape_fn((q, m), |(j, k)| beta[k * q + j]);
    let eta = d.dot(&b);
    let mut probs = Array2::zeros((n, m + 1));
    for (i, row) in eta.rows().into_iter().enumerate() {
        let p = softmax_with_reference(row);
        probs.row_mut(i).assign(&Array1::from(p));
    }
    probs
}

fn multinomial_deviance(y: &[f64], probs: &Array2<f64>) -> f64 {
    let ll: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| probs[[i, yi as usize - 1]].max(f64::MIN_POSITIVE).ln())
        .sum();
    -2.0 * ll
}

fn newton_multinomial(
    d: &Array2<f64>,
    y: &[f64],
    levels: usize,
    cfg: &GlmConfig,
) -> (Vec<f64>, bool, usize, f64) {
    let (n, q) = d.dim();
    let m = levels - 1;
    let dim = q * m;
    let mut beta = vec![0.0; dim];
    let mut probs = multinomial_probs(d, &beta, m);
    let mut dev = multinomial_deviance(y, &probs);
    for iter in 1..=cfg.max_iter {
        let mut h = Array2::<f64>::zeros((dim, dim));
        let mut g = vec![0.0; dim];
        for i in 0..n {
            let row = d.row(i);
            let yi = y[i] as usize;
            for k in 0..m {
                let pk = probs[[i, k + 1]];
                let ind = if yi == k + 2 { 1.0 } else { 0.0 };
                for a in 0..q {
                    g[k * q + a] += row[a] * (ind - pk);
                }
                for l in 0..=k {
                    let pl = probs[[i, l + 1]];
                    let w = if k == l { pk * (1.0 - pk) } else { -pk * pl };
                    for a in 0..q {
                        let wa = w * row[a];
                        for b in 0..q {
                            h[[k * q + a, l * q + b]] += wa * row[b];
                        }
                    }
                }
            }
        }
        for r in 0..dim {
            for c in (r + 1)..dim {
                h[[r, c]] = h[[c, r]];
            }
        }
        let Some(step) = linalg::cholesky_solve(&h, &g) else {
            return (beta, false, iter, dev);
        };
        let mut scale = 1.0;
        let (mut candidate, mut cand_probs, mut cand_dev);
        loop {
            candidate = beta
                .iter()
                .zip(&step)
                .map(|(b, s)| b + scale * s)
                .collect::<Vec<_>>();
            cand_probs = multinomial_probs(d, &candidate, m);
            cand_dev = multinomial_deviance(y, &cand_probs);
            if cand_dev <= dev * (1.0 + 1e-12) + 1e-12 || scale < 1e-3 {
                break;
            }
            scale *= 0.5;
        }
        let change = beta
            .iter()
            .zip(&candidate)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = candidate;
        probs = cand_probs;
        dev = cand_dev;
        if change < cfg.tol {
            return (beta, true, iter, dev);
        }
    }
    (beta, false, cfg.max_iter, dev)
}

/// Clamps probabilities into `[lo, hi]`, returning how many were moved.
pub fn truncate_pscore(p: &[f64], bounds: (f64, f64)) -> Result<(Vec<f64>, usize)> {
    let (lo, hi) = bounds;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(Error::InvalidArgument(format!(
            "truncation bounds must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})"
        )));
    }
    let mut clamped = 0;
    let out = p
        .iter()
        .map(|&v| {
            let c = v.clamp(lo, hi);
            if c != v {
                clamped += 1;
            }
            c
        })
        .collect();
    Ok((out, clamped))
}
