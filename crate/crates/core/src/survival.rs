//! Survival-curve contrasts `tau(t) = S1(t) - S0(t)` with right censoring.
//!
//! The weighting estimator is a product-limit curve per arm built from
//! propensity- and sensitivity-weighted event and risk-set counts at the
//! pooled event times. The regression and augmented estimators use
//! per-arm models of the survival indicator `1(Y > t)`.

use serde::{Deserialize, Serialize};

use crate::ate::weights_w;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glm::{fit_glm, Family, GlmConfig, GlmFit};
use crate::sensitivity::SensitivitySpec;

/// Sensitivity parameters for the survival indicator, constant in `t` or a
/// step function of `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SurvEps {
    Constant(SensitivitySpec),
    /// `(t_start, spec)` pairs sorted by `t_start`; the spec in force at `t`
    /// is the last one with `t_start <= t` (the first one before that).
    Table(Vec<(f64, SensitivitySpec)>),
}

impl SurvEps {
    pub fn unconfounded() -> Self {
        SurvEps::Constant(SensitivitySpec::unconfounded())
    }

    pub fn at(&self, t: f64) -> &SensitivitySpec {
        match self {
            SurvEps::Constant(s) => s,
            SurvEps::Table(rows) => &rows[self.index_at(t)].1,
        }
    }

    fn index_at(&self, t: f64) -> usize {
        match self {
            SurvEps::Constant(_) => 0,
            SurvEps::Table(rows) => rows.iter().rposition(|(t0, _)| *t0 <= t).unwrap_or(0),
        }
    }

    /// Per-unit `(eps1, eps0)` for every distinct spec, in table order.
    fn evaluate_all(&self, ds: &Dataset) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        match self {
            SurvEps::Constant(s) => Ok(vec![s.evaluate(ds.x().view())?]),
            SurvEps::Table(rows) => rows.iter().map(|(_, s)| s.evaluate(ds.x().view())).collect(),
        }
    }

    fn check(&self) -> Result<()> {
        if let SurvEps::Table(rows) = self {
            if rows.is_empty() {
                return Err(Error::InvalidArgument("empty sensitivity table".into()));
            }
            if rows.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                return Err(Error::InvalidArgument(
                    "sensitivity table times must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Product-limit curves per arm on the pooled event-time grid. Entries after
/// an arm's risk set empties are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub surv1: Vec<f64>,
    pub surv0: Vec<f64>,
}

impl SurvivalCurve {
    fn lookup(&self, curve: &[f64], t: f64) -> f64 {
        match self.times.iter().rposition(|&tj| tj <= t) {
            None => 1.0,
            Some(j) => curve[j],
        }
    }

    /// `S_z(t)` as a right-continuous step function.
    pub fn surv_at(&self, level: usize, t: f64) -> f64 {
        if level == 1 {
            self.lookup(&self.surv1, t)
        } else {
            self.lookup(&self.surv0, t)
        }
    }

    pub fn tau_at(&self, t: f64) -> f64 {
        self.surv_at(1, t) - self.surv_at(0, t)
    }

    pub fn tau(&self) -> Vec<f64> {
        self.surv1.iter().zip(&self.surv0).map(|(a, b)| a - b).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WkmResult {
    pub curve: SurvivalCurve,
    pub warnings: Vec<String>,
}

fn events(ds: &Dataset) -> Result<&[u8]> {
    ds.delta()
        .ok_or_else(|| Error::InvalidArgument("survival estimators need an event indicator".into()))
}

fn check_ehat(ds: &Dataset, ehat: &[f64]) -> Result<()> {
    if ehat.len() != ds.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} propensity scores for {} rows",
            ehat.len(),
            ds.n()
        )));
    }
    if let Some(e) = ehat.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "propensity score {e} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Sorted distinct times with at least one observed event.
pub fn event_times(ds: &Dataset) -> Result<Vec<f64>> {
    let d = events(ds)?;
    let mut t: Vec<f64> = (0..ds.n()).filter(|&i| d[i] == 1).map(|i| ds.y()[i]).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    Ok(t)
}

/// Arm slot (0 treated, 1 control) and weight `w_z / pr(Z = z)` of unit `i`.
fn unit_weight(ds: &Dataset, ehat: &[f64], eps1: &[f64], eps0: &[f64], i: usize) -> (usize, f64) {
    let e = ehat[i];
    let (w1, w0) = weights_w(e, eps1[i], eps0[i]);
    if ds.z()[i] == 1 {
        (0, w1 / e)
    } else {
        (1, w0 / (1.0 - e))
    }
}

/// Weighted Kaplan-Meier curves for both arms.
pub fn surv_wkm(ds: &Dataset, ehat: &[f64], eps: &SurvEps) -> Result<WkmResult> {
    let d = events(ds)?;
    check_ehat(ds, ehat)?;
    eps.check()?;
    for level in [1, 0] {
        if !(0..ds.n()).any(|i| ds.z()[i] == level && d[i] == 1) {
            return Err(Error::Estimation(format!(
                "{} arm has no observed events",
                if level == 1 { "treated" } else { "control" }
            )));
        }
    }
    let times = event_times(ds)?;
    let y = ds.y();
    let mut order: Vec<usize> = (0..ds.n()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));

    let evals = eps.evaluate_all(ds)?;
    // per spec: risk-set totals over units from sorted position k onwards
    let suffix: Vec<Vec<[f64; 2]>> = evals
        .iter()
        .map(|(eps1, eps0)| {
            let mut acc = vec![[0.0; 2]; order.len() + 1];
            for k in (0..order.len()).rev() {
                let (arm, w) = unit_weight(ds, ehat, eps1, eps0, order[k]);
                acc[k] = acc[k + 1];
                acc[k][arm] += w;
            }
            acc
        })
        .collect();

    let mut surv = [Vec::with_capacity(times.len()), Vec::with_capacity(times.len())];
    let mut level_s = [1.0f64, 1.0];
    let mut dead = [false, false];
    let mut warnings = Vec::new();
    // `start` is the first sorted unit still at risk at the current time
    let mut start = 0;
    for &tj in &times {
        let si = eps.index_at(tj);
        let (eps1, eps0) = &evals[si];
        while start < order.len() && y[order[start]] < tj {
            start += 1;
        }
        let nj = suffix[si][start];
        let mut dj = [0.0; 2];
        for &i in order[start..].iter().take_while(|&&i| y[i] == tj) {
            if d[i] == 1 {
                let (arm, w) = unit_weight(ds, ehat, eps1, eps0, i);
                dj[arm] += w;
            }
        }
        for arm in 0..2 {
            if dead[arm] {
                surv[arm].push(f64::NAN);
                continue;
            }
            if nj[arm] <= 0.0 {
                dead[arm] = true;
                warnings.push(format!(
                    "{} arm risk set is empty at t = {tj}; curve truncated",
                    if arm == 0 { "treated" } else { "control" }
                ));
                surv[arm].push(f64::NAN);
                continue;
            }
            level_s[arm] *= 1.0 - dj[arm] / nj[arm];
            surv[arm].push(level_s[arm]);
        }
    }
    let [surv1, surv0] = surv;
    Ok(WkmResult {
        curve: SurvivalCurve {
            times,
            surv1,
            surv0,
        },
        warnings,
    })
}

/// Fitted `pr(Y > t | Z = z, X)` for both arms at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvProbFits {
    pub t: f64,
    pub p1: Vec<f64>,
    pub p0: Vec<f64>,
    pub models: [Option<GlmFit>; 2],
    pub warnings: Vec<String>,
}

impl SurvProbFits {
    pub fn from_values(t: f64, p1: Vec<f64>, p0: Vec<f64>) -> Result<Self> {
        if p1.len() != p0.len() {
            return Err(Error::DimensionMismatch(format!(
                "survival probability vectors have lengths {} and {}",
                p1.len(),
                p0.len()
            )));
        }
        Ok(Self {
            t,
            p1,
            p0,
            models: [None, None],
            warnings: Vec::new(),
        })
    }
}

/// Binomial regression of `1(Y > t)` on covariates within one arm, using
/// units whose status at `t` is known. A constant indicator gives a constant
/// prediction without fitting.
fn fit_arm_prob(
    ds: &Dataset,
    t: f64,
    level: usize,
    glm: &GlmConfig,
    warnings: &mut Vec<String>,
) -> Result<(Vec<f64>, Option<GlmFit>)> {
    let d = events(ds)?;
    let y = ds.y();
    let rows: Vec<usize> = (0..ds.n())
        .filter(|&i| ds.z()[i] == level && (y[i] > t || d[i] == 1))
        .collect();
    let arm = if level == 1 { "treated" } else { "control" };
    if rows.is_empty() {
        return Err(Error::Estimation(format!(
            "no {arm} units with known survival status at t = {t}"
        )));
    }
    let ind: Vec<f64> = rows.iter().map(|&i| if y[i] > t { 1.0 } else { 0.0 }).collect();
    if ind.iter().all(|&v| v == ind[0]) {
        return Ok((vec![ind[0]; ds.n()], None));
    }
    let xa = ds.x().select(ndarray::Axis(0), &rows);
    let fit = match fit_glm(xa.view(), &ind, Family::Binomial, glm) {
        Ok(f) => f,
        Err(Error::NonConvergence { partial }) => {
            warnings.push(format!(
                "{arm} survival model at t = {t} did not converge; using last iterate"
            ));
            *partial
        }
        Err(e) => return Err(e),
    };
    warnings.extend(fit.warnings.iter().map(|w| format!("{arm} survival model at t = {t}: {w}")));
    let p = fit.predict_mean(ds.x().view())?.to_vec();
    Ok((p, Some(fit)))
}

pub fn fit_surv_probs(ds: &Dataset, t: f64, glm: &GlmConfig) -> Result<SurvProbFits> {
    let mut warnings = Vec::new();
    let (p1, m1) = fit_arm_prob(ds, t, 1, glm, &mut warnings)?;
    let (p0, m0) = fit_arm_prob(ds, t, 0, glm, &mut warnings)?;
    Ok(SurvProbFits {
        t,
        p1,
        p0,
        models: [m1, m0],
        warnings,
    })
}

fn horizon_warning(ds: &Dataset, t: f64) -> Result<Option<String>> {
    let times = event_times(ds)?;
    Ok(match times.last() {
        Some(&last) if t > last => Some(format!(
            "t = {t} lies beyond the last event time {last}; estimate extrapolates"
        )),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvEstimate {
    pub t: f64,
    pub value: f64,
    pub warnings: Vec<String>,
}

fn check_probs(ds: &Dataset, pf: &SurvProbFits) -> Result<()> {
    if pf.p1.len() != ds.n() {
        return Err(Error::DimensionMismatch(format!(
            "survival probabilities have {} rows, dataset has {}",
            pf.p1.len(),
            ds.n()
        )));
    }
    Ok(())
}

/// Regression estimate of `tau(t)`.
pub fn surv_reg(t: f64, ds: &Dataset, pf: &SurvProbFits, eps: &SurvEps) -> Result<SurvEstimate> {
    events(ds)?;
    check_probs(ds, pf)?;
    eps.check()?;
    let (eps1, eps0) = eps.at(t).evaluate(ds.x().view())?;
    let n = ds.n() as f64;
    let value = (0..ds.n())
        .map(|i| {
            let z = ds.zf(i);
            let s1 = z * pf.p1[i] + (1.0 - z) * pf.p1[i] / eps1[i];
            let s0 = z * pf.p0[i] * eps0[i] + (1.0 - z) * pf.p0[i];
            s1 - s0
        })
        .sum::<f64>()
        / n;
    let mut warnings = pf.warnings.clone();
    warnings.extend(horizon_warning(ds, t)?);
    Ok(SurvEstimate { t, value, warnings })
}

/// Weighted Kaplan-Meier contrast at `t`.
pub fn surv_ht(t: f64, ds: &Dataset, ehat: &[f64], eps: &SurvEps) -> Result<SurvEstimate> {
    let wkm = surv_wkm(ds, ehat, eps)?;
    let mut warnings = wkm.warnings;
    warnings.extend(horizon_warning(ds, t)?);
    Ok(SurvEstimate {
        t,
        value: wkm.curve.tau_at(t),
        warnings,
    })
}

/// Weighted Kaplan-Meier contrast augmented by the survival models. A
/// single propensity fit is used for every `t`.
pub fn surv_dr(
    t: f64,
    ds: &Dataset,
    ehat: &[f64],
    pf: &SurvProbFits,
    eps: &SurvEps,
) -> Result<SurvEstimate> {
    check_probs(ds, pf)?;
    let ht = surv_ht(t, ds, ehat, eps)?;
    let (eps1, eps0) = eps.at(t).evaluate(ds.x().view())?;
    let n = ds.n() as f64;
    let corr = (0..ds.n())
        .map(|i| {
            let e = ehat[i];
            let dz = ds.zf(i) - e;
            dz * pf.p1[i] / (e * eps1[i]) + dz * pf.p0[i] * eps0[i] / (1.0 - e)
        })
        .sum::<f64>()
        / n;
    let mut warnings = pf.warnings.clone();
    warnings.extend(ht.warnings);
    Ok(SurvEstimate {
        t,
        value: ht.value - corr,
        warnings,
    })
}
