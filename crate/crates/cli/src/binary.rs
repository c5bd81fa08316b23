//! Subcommands on binary-treatment data.

use anyhow::Result;
use causens_core::ate::{self, ate_bounds, ate_diff_scale, DiffMethod, Method, Shift};
use causens_core::att::{att, att_bounds, AttMethod};
use causens_core::calibration::{calibrate, CalibrationRecord, RatioSummary};
use causens_core::dataset::{Dataset, Mode};
use causens_core::glm::Family;
use causens_core::inference::{bootstrap_many, BootstrapResult};
use causens_core::nuisance::{fit_nuisances, NuisanceConfig};
use causens_core::ratio::{ratio_effect, RatioKind};
use causens_core::records::EstimateRecord;
use causens_core::sensitivity::{EpsFn, SensitivitySpec};
use serde::{Deserialize, Serialize};

use crate::args::{
    AteEst, BoundsArgs, BoundsEst, CalibrateArgs, Estimand, SaAteArgs, SaAttArgs, SaDiffArgs,
    SaRatioArgs, TrioEst,
};
use crate::output::{
    boot_config, input_info, label, load, manifest_path, nuisance_config, usage, write_records,
    Manifest,
};

/// One output column of a bootstrapped estimator vector.
pub struct Cell {
    pub estimand: String,
    pub estimator: String,
    pub eps1: String,
    pub eps0: String,
}

pub fn to_records(cells: &[Cell], results: &[BootstrapResult]) -> Vec<EstimateRecord> {
    cells
        .iter()
        .zip(results)
        .map(|(c, b)| {
            EstimateRecord::from_bootstrap(&c.estimand, &c.estimator, c.eps1.clone(), c.eps0.clone(), b)
        })
        .collect()
}

pub fn max_failed(results: &[BootstrapResult]) -> Option<usize> {
    results.iter().map(|r| r.n_failed).max()
}

fn grid(a: &[f64], b: &[f64]) -> Vec<(f64, f64)> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
}

/// Point estimates of the average effect for every estimator and cell, in
/// estimator-major order.
pub fn ate_grid(
    ds: &Dataset,
    ncfg: &NuisanceConfig,
    estimators: &[AteEst],
    cells: &[(f64, f64)],
    n_matches: usize,
) -> causens_core::Result<Vec<f64>> {
    let fits = fit_nuisances(ds, ncfg)?;
    let mut out = Vec::with_capacity(estimators.len() * cells.len());
    for est in estimators {
        for &(e1, e0) in cells {
            let spec = SensitivitySpec::constant(e1, e0);
            out.push(match est.method() {
                Some(m) => ate::ate(m, ds, &fits, &spec)?,
                None => ate::ate_matching_bc(ds, n_matches, &spec, &fits.mu1hat, &fits.mu0hat)?,
            });
        }
    }
    Ok(out)
}

pub fn sa_ate(a: &SaAteArgs) -> Result<()> {
    let (ds, mut warnings) = load(&a.data, None, Mode::Binary)?;
    let ncfg = nuisance_config(&a.model, Family::Gaussian)?;
    let bcfg = boot_config(&a.boot)?;
    if a.estimator.contains(&AteEst::Match) && a.n_matches == 0 {
        return Err(usage("--n-matches: need at least 1"));
    }
    let cells = grid(&a.eps1_list.0, &a.eps0_list.0);
    warnings.extend(fit_nuisances(&ds, &ncfg)?.warnings);
    let results = bootstrap_many(
        |d| ate_grid(d, &ncfg, &a.estimator, &cells, a.n_matches),
        &ds,
        &bcfg,
    )?;
    let labels: Vec<Cell> = a
        .estimator
        .iter()
        .flat_map(|est| {
            cells.iter().map(move |&(e1, e0)| Cell {
                estimand: "ate".into(),
                estimator: est.name().into(),
                eps1: label(e1),
                eps0: label(e0),
            })
        })
        .collect();

    let mut m = Manifest::new("sa-ate", a.boot.seed, a);
    m.inputs.push(input_info(&a.data.input)?);
    m.bootstrap_failed = max_failed(&results);
    m.warn(warnings);
    write_records(&to_records(&labels, &results), &a.out.out, &a.out.json, &mut m)?;
    m.write(&manifest_path(&a.out.manifest, &a.out.out))
}

pub fn sa_att(a: &SaAttArgs) -> Result<()> {
    let (ds, mut warnings) = load(&a.data, None, Mode::Binary)?;
    let ncfg = nuisance_config(&a.model, Family::Gaussian)?;
    let bcfg = boot_config(&a.boot)?;
    warnings.extend(fit_nuisances(&ds, &ncfg)?.warnings);
    let eps0 = &a.eps0_list.0;
    let eval = |d: &Dataset| -> causens_core::Result<Vec<f64>> {
        let fits = fit_nuisances(d, &ncfg)?;
        let mut out = Vec::new();
        for &est in &a.estimator {
            for &e0 in eps0 {
                out.push(att(AttMethod::from(est), d, &fits, &EpsFn::Constant(e0))?);
            }
        }
        Ok(out)
    };
    let results = bootstrap_many(eval, &ds, &bcfg)?;
    let labels: Vec<Cell> = a
        .estimator
        .iter()
        .flat_map(|&est| {
            eps0.iter().map(move |&e0| Cell {
                estimand: "att".into(),
                estimator: AttMethod::from(est).name().into(),
                eps1: "NA".into(),
                eps0: label(e0),
            })
        })
        .collect();

    let mut m = Manifest::new("sa-att", a.boot.seed, a);
    m.inputs.push(input_info(&a.data.input)?);
    m.bootstrap_failed = max_failed(&results);
    m.warn(warnings);
    write_records(&to_records(&labels, &results), &a.out.out, &a.out.json, &mut m)?;
    m.write(&manifest_path(&a.out.manifest, &a.out.out))
}

pub fn sa_ratio(a: &SaRatioArgs, base: RatioKind, command: &str) -> Result<()> {
    let kind = base.with_log(a.log);
    let (ds, mut warnings) = load(&a.data, None, Mode::Binary)?;
    let ncfg = nuisance_config(&a.model, Family::Binomial)?;
    let bcfg = boot_config(&a.boot)?;
    let cells = grid(&a.eps1_list.0, &a.eps0_list.0);
    let eval = |d: &Dataset| -> causens_core::Result<(Vec<f64>, Vec<String>)> {
        let fits = fit_nuisances(d, &ncfg)?;
        let mut out = Vec::new();
        let mut warn = fits.warnings.clone();
        for &est in &a.estimator {
            for &(e1, e0) in &cells {
                let r = ratio_effect(kind, Method::from(est), d, &fits, &SensitivitySpec::constant(e1, e0))?;
                out.push(r.value);
                warn.extend(r.warnings);
            }
        }
        Ok((out, warn))
    };
    warnings.extend(eval(&ds)?.1);
    let results = bootstrap_many(|d| eval(d).map(|r| r.0), &ds, &bcfg)?;
    let labels: Vec<Cell> = a
        .estimator
        .iter()
        .flat_map(|&est| {
            cells.iter().map(move |&(e1, e0)| Cell {
                estimand: kind.name().into(),
                estimator: Method::from(est).name().into(),
                eps1: label(e1),
                eps0: label(e0),
            })
        })
        .collect();

    let mut m = Manifest::new(command, a.boot.seed, a);
    m.inputs.push(input_info(&a.data.input)?);
    m.bootstrap_failed = max_failed(&results);
    m.warn(warnings);
    write_records(&to_records(&labels, &results), &a.out.out, &a.out.json, &mut m)?;
    m.write(&manifest_path(&a.out.manifest, &a.out.out))
}

fn diff_method(e: TrioEst) -> DiffMethod {
    match e {
        TrioEst::Reg => DiffMethod::Reg,
        TrioEst::Ht => DiffMethod::Ht,
        TrioEst::Dr => DiffMethod::Dr,
    }
}

pub fn sa_diff(a: &SaDiffArgs) -> Result<()> {
    let (ds, mut warnings) = load(&a.data, None, Mode::Binary)?;
    let ncfg = nuisance_config(&a.model, Family::Gaussian)?;
    let bcfg = boot_config(&a.boot)?;
    warnings.extend(fit_nuisances(&ds, &ncfg)?.warnings);
    let cells = grid(&a.delta1_list.0, &a.delta0_list.0);
    let eval = |d: &Dataset| -> causens_core::Result<Vec<f64>> {
        let fits = fit_nuisances(d, &ncfg)?;
        let mut out = Vec::new();
        for &est in &a.estimator {
            for &(d1, d0) in &cells {
                out.push(ate_diff_scale(
                    d,
                    &fits,
                    &Shift::Constant(d1),
                    &Shift::Constant(d0),
                    diff_method(est),
                )?);
            }
        }
        Ok(out)
    };
    let results = bootstrap_many(eval, &ds, &bcfg)?;
    let labels: Vec<Cell> = a
        .estimator
        .iter()
        .flat_map(|&est| {
            cells.iter().map(move |&(d1, d0)| Cell {
                estimand: "ate_diff".into(),
                estimator: est.name().into(),
                eps1: label(d1),
                eps0: label(d0),
            })
        })
        .collect();

    let mut m = Manifest::new("sa-diff", a.boot.seed, a);
    m.inputs.push(input_info(&a.data.input)?);
    m.bootstrap_failed = max_failed(&results);
    m.warn(warnings);
    write_records(&to_records(&labels, &results), &a.out.out, &a.out.json, &mut m)?;
    m.write(&manifest_path(&a.out.manifest, &a.out.out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub estimand: String,
    pub estimator: String,
    pub eps1_lo: String,
    pub eps1_hi: String,
    pub eps0_lo: String,
    pub eps0_hi: String,
    pub lower: f64,
    pub upper: f64,
}

pub fn bounds(a: &BoundsArgs) -> Result<()> {
    let (ds, mut warnings) = load(&a.data, None, Mode::Binary)?;
    let ncfg = nuisance_config(&a.model, Family::Gaussian)?;
    let fits = fit_nuisances(&ds, &ncfg)?;
    warnings.extend(fits.warnings.iter().cloned());
    let (r1, r0) = (a.eps1_range, a.eps0_range);
    let estimators = a.estimator.clone().unwrap_or_else(|| match a.estimand {
        Estimand::Ate => vec![BoundsEst::Proj, BoundsEst::Ht, BoundsEst::Dr],
        Estimand::Att => vec![BoundsEst::Reg, BoundsEst::Ht, BoundsEst::Dr],
    });
    let mut rows = Vec::new();
    for est in estimators {
        let (name, b) = match a.estimand {
            Estimand::Ate => {
                let m = match est {
                    BoundsEst::Pred => Method::Pred,
                    BoundsEst::Proj => Method::Proj,
                    BoundsEst::Ht => Method::Ht,
                    BoundsEst::Hajek => Method::Hajek,
                    BoundsEst::Dr => Method::Dr,
                    BoundsEst::Reg => return Err(usage("--estimator: reg applies to --estimand att; use pred or proj")),
                };
                (m.name(), ate_bounds(&ds, &fits, (r1.lo, r1.hi), (r0.lo, r0.hi), m)?)
            }
            Estimand::Att => {
                let m = match est {
                    BoundsEst::Reg => AttMethod::Reg,
                    BoundsEst::Ht => AttMethod::Ht,
                    BoundsEst::Hajek => AttMethod::Hajek,
                    BoundsEst::Dr => AttMethod::Dr,
                    BoundsEst::Pred | BoundsEst::Proj => {
                        return Err(usage("--estimator: pred and proj apply to --estimand ate; use reg"))
                    }
                };
                (m.name(), att_bounds(&ds, &fits, (r0.lo, r0.hi), m)?)
            }
        };
        warnings.extend(b.warnings);
        let (e1lo, e1hi) = match a.estimand {
            Estimand::Ate => (label(r1.lo), label(r1.hi)),
            Estimand::Att => ("NA".into(), "NA".into()),
        };
        rows.push(BoundsRow {
            estimand: match a.estimand {
                Estimand::Ate => "ate".into(),
                Estimand::Att => "att".into(),
            },
            estimator: name.into(),
            eps1_lo: e1lo,
            eps1_hi: e1hi,
            eps0_lo: label(r0.lo),
            eps0_hi: label(r0.hi),
            lower: b.lower,
            upper: b.upper,
        });
    }

    let mut m = Manifest::new("bounds", a.seed, a);
    m.inputs.push(input_info(&a.data.input)?);
    m.warn(warnings);
    write_rows(&rows, &a.out.out)?;
    m.output(&a.out.out);
    if let Some(j) = &a.out.json {
        crate::output::write_json(&rows, j)?;
        m.output(j);
    }
    m.write(&manifest_path(&a.out.manifest, &a.out.out))
}

pub fn write_rows<T: Serialize>(rows: &[T], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Flat calibration row; the `contour` overlay reads this layout back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub dropped: String,
    pub eps1_min: f64,
    pub eps1_max: f64,
    pub eps1_mean: f64,
    pub eps1_q05: f64,
    pub eps1_q25: f64,
    pub eps1_q50: f64,
    pub eps1_q75: f64,
    pub eps1_q95: f64,
    pub eps1_n_excluded: usize,
    pub eps0_min: f64,
    pub eps0_max: f64,
    pub eps0_mean: f64,
    pub eps0_q05: f64,
    pub eps0_q25: f64,
    pub eps0_q50: f64,
    pub eps0_q75: f64,
    pub eps0_q95: f64,
    pub eps0_n_excluded: usize,
}

impl From<&CalibrationRecord> for CalibrationRow {
    fn from(r: &CalibrationRecord) -> Self {
        let (a, b): (&RatioSummary, &RatioSummary) = (&r.eps1, &r.eps0);
        Self {
            dropped: r.label(),
            eps1_min: a.min,
            eps1_max: a.max,
            eps1_mean: a.mean,
            eps1_q05: a.q05,
            eps1_q25: a.q25,
            eps1_q50: a.q50,
            eps1_q75: a.q75,
            eps1_q95: a.q95,
            eps1_n_excluded: a.n_excluded,
            eps0_min: b.min,
            eps0_max: b.max,
            eps0_mean: b.mean,
            eps0_q05: b.q05,
            eps0_q25: b.q25,
            eps0_q50: b.q50,
            eps0_q75: b.q75,
            eps0_q95: b.q95,
            eps0_n_excluded: b.n_excluded,
        }
    }
}

pub fn calibrate_cmd(a: &CalibrateArgs) -> Result<()> {
    let (ds, mut warnings) = load(&a.data, None, Mode::Binary)?;
    let ncfg = nuisance_config(&a.model, Family::Gaussian)?;
    let fits = fit_nuisances(&ds, &ncfg)?;
    warnings.extend(fits.warnings.iter().cloned());
    let sets: Vec<Vec<usize>> = if a.drop.is_empty() {
        (0..ds.p()).map(|j| vec![j]).collect()
    } else {
        a.drop
            .iter()
            .map(|set| {
                set.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|name| {
                        ds.column_index(name)
                            .ok_or_else(|| usage(format!("--drop: `{name}` is not a covariate")))
                    })
                    .collect::<Result<Vec<usize>>>()
            })
            .collect::<Result<_>>()?
    };
    let records: Vec<CalibrationRecord> = sets
        .iter()
        .map(|s| calibrate(&ds, &fits, s))
        .collect::<causens_core::Result<_>>()?;
    for r in &records {
        for (arm, s) in [("eps1", &r.eps1), ("eps0", &r.eps0)] {
            if s.n_excluded > 0 {
                warnings.push(format!(
                    "dropping {}: {} units with a non-positive {arm} ratio were excluded",
                    r.label(),
                    s.n_excluded
                ));
            }
        }
    }
    let rows: Vec<CalibrationRow> = records.iter().map(CalibrationRow::from).collect();

    let mut m = Manifest::new("calibrate", a.seed, a);
    m.inputs.push(input_info(&a.data.input)?);
    m.warn(warnings);
    write_rows(&rows, &a.out.out)?;
    m.output(&a.out.out);
    if let Some(j) = &a.out.json {
        crate::output::write_json(&records, j)?;
        m.output(j);
    }
    m.write(&manifest_path(&a.out.manifest, &a.out.out))
}
