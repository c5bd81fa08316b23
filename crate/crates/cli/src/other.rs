//! Contour, simulation, survival and multi-level subcommands.

use anyhow::{Context, Result};
use causens_core::contour::{default_levels, render_svg, Grid, OverlayPoint};
use causens_core::dataset::{Dataset, Mode};
use causens_core::glm::Family;
use causens_core::inference::bootstrap_many;
use causens_core::multi::{fit_multi_nuisances, multi_contrast, Contrast, EpsMatrix, MultiMethod};
use causens_core::nuisance::{fit_pscore, OutcomeScale};
use causens_core::records::read_records_csv;
use causens_core::sensitivity::{EpsFn, SensitivitySpec};
use causens_core::simulation::{run_simulation, SimConfig};
use causens_core::survival::{fit_surv_probs, surv_dr, surv_reg, surv_wkm, SurvEps, SurvProbFits};
use serde::Serialize;

use crate::args::{
    ContourArgs, ContourValue, DataArgs, SaMultiArgs, SaSurvArgs, ScaleArg, SimulateArgs, TrioEst,
};
use crate::binary::{ate_grid, max_failed, to_records, write_rows, CalibrationRow, Cell};
use crate::output::{
    boot_config, glm_config, input_info, label, load, manifest_path, nuisance_config, usage,
    write_records, Manifest,
};

fn pick(value: ContourValue, est: f64, lo: f64, hi: f64) -> f64 {
    match value {
        ContourValue::Est => est,
        ContourValue::CiLb => lo,
        ContourValue::CiUb => hi,
    }
}

/// Evenly spaced points, rounded to 12 decimals so labels stay short.
fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / (k - 1) as f64;
            (v * 1e12).round() / 1e12
        })
        .collect()
}

pub fn contour(a: &ContourArgs) -> Result<()> {
    let mut m = Manifest::new("contour", a.boot.seed, a);
    let rows: Vec<(f64, f64, f64)> = if let Some(path) = &a.results {
        if !path.is_file() {
            return Err(usage(format!("--results: file `{}` not found", path.display())));
        }
        m.inputs.push(input_info(path)?);
        let records = read_records_csv(path).with_context(|| format!("reading {}", path.display()))?;
        let name = a.estimator.name();
        let mut rows = Vec::new();
        for r in records.iter().filter(|r| r.estimand == "ate" && r.estimator == name) {
            let parse = |s: &str, flag: &str| {
                s.parse::<f64>()
                    .map_err(|_| usage(format!("--results: {flag} value `{s}` is not numeric")))
            };
            rows.push((
                parse(&r.eps1, "eps1")?,
                parse(&r.eps0, "eps0")?,
                pick(a.value, r.est, r.ci_lo, r.ci_hi),
            ));
        }
        if rows.is_empty() {
            return Err(usage(format!("--results: no ate rows for estimator `{name}`")));
        }
        rows
    } else {
        let Some(input) = &a.input else {
            return Err(usage("contour needs --results or --input"));
        };
        if a.grid_size < 2 {
            return Err(usage(format!("--grid-size: need at least 2, got {}", a.grid_size)));
        }
        if !(a.eps1_range.lo > 0.0 && a.eps0_range.lo > 0.0) {
            return Err(usage("--eps1-range / --eps0-range: values must be positive"));
        }
        let data = DataArgs {
            input: input.clone(),
            treatment: a.treatment.clone(),
            outcome: a.outcome.clone(),
            covariates: a.covariates.clone(),
        };
        let (ds, warnings) = load(&data, None, Mode::Binary)?;
        m.inputs.push(input_info(input)?);
        m.warn(warnings);
        let ncfg = nuisance_config(&a.model, Family::Gaussian)?;
        let e1 = linspace(a.eps1_range.lo, a.eps1_range.hi, a.grid_size);
        let e0 = linspace(a.eps0_range.lo, a.eps0_range.hi, a.grid_size);
        let cells: Vec<(f64, f64)> = e1.iter().flat_map(|&x| e0.iter().map(move |&y| (x, y))).collect();
        let est = [a.estimator];
        let values = if a.value == ContourValue::Est {
            ate_grid(&ds, &ncfg, &est, &cells, 1)?
        } else {
            let bcfg = boot_config(&a.boot)?;
            let res = bootstrap_many(|d| ate_grid(d, &ncfg, &est, &cells, 1), &ds, &bcfg)?;
            m.bootstrap_failed = max_failed(&res);
            res.iter().map(|r| pick(a.value, r.estimate, r.ci_lo, r.ci_hi)).collect()
        };
        cells.iter().zip(values).map(|(&(x, y), v)| (x, y, v)).collect()
    };
    let grid = Grid::from_long(&rows)?;

    let mut overlay = Vec::new();
    if let Some(path) = &a.calibration {
        if !path.is_file() {
            return Err(usage(format!("--calibration: file `{}` not found", path.display())));
        }
        m.inputs.push(input_info(path)?);
        let mut r = csv::Reader::from_path(path)?;
        for row in r.deserialize() {
            let row: CalibrationRow = row.with_context(|| format!("reading {}", path.display()))?;
            overlay.push(OverlayPoint {
                label: row.dropped,
                eps1: row.eps1_max,
                eps0: row.eps0_max,
            });
        }
    }
    let levels = match &a.level_values {
        Some(v) => v.0.clone(),
        None => default_levels(&grid, a.levels),
    };
    let value_name = match a.value {
        ContourValue::Est => "est",
        ContourValue::CiLb => "ci_lb",
        ContourValue::CiUb => "ci_ub",
    };
    let title = format!("ate, {} estimator, {}", a.estimator.name(), value_name);
    let svg_path = a.svg.clone().unwrap_or_else(|| a.out.with_extension("svg"));
    std::fs::write(&a.out, grid.to_long_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    std::fs::write(&svg_path, render_svg(&grid, &levels, &overlay, &title))
        .with_context(|| format!("writing {}", svg_path.display()))?;
    m.output(&a.out);
    m.output(&svg_path);
    m.write(&manifest_path(&a.manifest, &a.out))
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let base = if a.full_scale {
        SimConfig::full_scale()
    } else {
        SimConfig::default()
    };
    let cfg = SimConfig {
        n: a.n,
        b_list: a.b_list.0.clone(),
        eps1_list: a.eps1_list.0.clone(),
        n_mc: a.n_mc.unwrap_or(base.n_mc),
        n_boot: a.n_boot,
        seed: a.seed,
        outcome_scale: match a.outcome_scale {
            ScaleArg::Raw => OutcomeScale::Raw,
            ScaleArg::Log => OutcomeScale::LogSmearing,
        },
        ci_level: a.ci_level,
    };
    if let Some(b) = cfg.b_list.iter().find(|b| **b < 0.0) {
        return Err(usage(format!("--b-list: {b} is negative")));
    }
    if cfg.n < 10 || cfg.n_mc == 0 || cfg.n_boot < 2 {
        return Err(usage("--n, --n-mc and --n-boot must be at least 10, 1 and 2"));
    }
    let table = run_simulation(&cfg)?;
    let mut m = Manifest::new("simulate", a.seed, &cfg);
    for (b, f) in table.b_list.iter().zip(&table.n_failed) {
        if *f > 0 {
            m.warn([format!("b = {b}: {f} of {} replicates failed", table.n_mc)]);
        }
    }
    std::fs::write(&a.out, table.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    m.output(&a.out);
    m.write(&manifest_path(&a.manifest, &a.out))
}

#[derive(Serialize)]
struct CurveRow {
    eps1: String,
    eps0: String,
    time: f64,
    surv1: f64,
    surv0: f64,
    diff: f64,
}

pub fn sa_surv(a: &SaSurvArgs) -> Result<()> {
    let (ds, mut warnings) = load(&a.data, Some(&a.event), Mode::Survival)?;
    let ncfg = nuisance_config(&a.model, Family::Gaussian)?;
    let bcfg = boot_config(&a.boot)?;
    let times = &a.times.0;
    let cells: Vec<(f64, f64)> = a
        .eps1_list
        .0
        .iter()
        .flat_map(|&x| a.eps0_list.0.iter().map(move |&y| (x, y)))
        .collect();
    let needs_pf = a.estimator.iter().any(|e| *e != TrioEst::Ht);

    let eval = |d: &Dataset| -> causens_core::Result<(Vec<f64>, Vec<String>)> {
        let (e, _, _, mut warn) = fit_pscore(d, &ncfg)?;
        let pfs: Vec<SurvProbFits> = if needs_pf {
            times
                .iter()
                .map(|&t| fit_surv_probs(d, t, &ncfg.glm))
                .collect::<causens_core::Result<_>>()?
        } else {
            Vec::new()
        };
        let mut out = Vec::new();
        for &est in &a.estimator {
            for (ti, &t) in times.iter().enumerate() {
                for &(e1, e0) in &cells {
                    let eps = SurvEps::Constant(SensitivitySpec::constant(e1, e0));
                    let r = match est {
                        TrioEst::Reg => surv_reg(t, d, &pfs[ti], &eps)?,
                        TrioEst::Ht => causens_core::survival::surv_ht(t, d, &e, &eps)?,
                        TrioEst::Dr => surv_dr(t, d, &e, &pfs[ti], &eps)?,
                    };
                    out.push(r.value);
                    warn.extend(r.warnings);
                }
            }
        }
        Ok((out, warn))
    };
    warnings.extend(eval(&ds)?.1);
    let results = bootstrap_many(|d| eval(d).map(|r| r.0), &ds, &bcfg)?;
    let mut labels = Vec::new();
    for &est in &a.estimator {
        for &t in times {
            for &(e1, e0) in &cells {
                labels.push(Cell {
                    estimand: format!("surv_diff@{}", label(t)),
                    estimator: est.name().into(),
                    eps1: label(e1),
                    eps0: label(e0),
                });
            }
        }
    }

    let mut m = Manifest::new("sa-surv", a.boot.seed, a);
    m.inputs.push(input_info(&a.data.input)?);
    m.bootstrap_failed = max_failed(&results);
    if let Some(path) = &a.curve {
        let (e, _, _, _) = fit_pscore(&ds, &ncfg)?;
        let mut rows = Vec::new();
        for &(e1, e0) in &cells {
            let eps = SurvEps::Constant(SensitivitySpec::constant(e1, e0));
            let wkm = surv_wkm(&ds, &e, &eps)?;
            warnings.extend(wkm.warnings);
            let c = &wkm.curve;
            for (j, &t) in c.times.iter().enumerate() {
                rows.push(CurveRow {
                    eps1: label(e1),
                    eps0: label(e0),
                    time: t,
                    surv1: c.surv1[j],
                    surv0: c.surv0[j],
                    diff: c.surv1[j] - c.surv0[j],
                });
            }
        }
        write_rows(&rows, path)?;
        m.output(path);
    }
    m.warn(warnings);
    write_records(&to_records(&labels, &results), &a.out.out, &a.out.json, &mut m)?;
    m.write(&manifest_path(&a.out.manifest, &a.out.out))
}

pub fn sa_multi(a: &SaMultiArgs) -> Result<()> {
    let (ds, mut warnings) = load(&a.data, None, Mode::Multi)?;
    let bcfg = boot_config(&a.boot)?;
    let k = ds.z().iter().copied().max().unwrap_or(0);
    if a.contrast.0.len() != k {
        return Err(usage(format!(
            "--contrast: {} weights given for {k} treatment levels",
            a.contrast.0.len()
        )));
    }
    let contrast = Contrast::new(a.contrast.0.clone()).map_err(|e| usage(format!("--contrast: {e}")))?;
    let mut eps = EpsMatrix::ones(k);
    for e in &a.eps {
        eps.set(e.k, e.l, EpsFn::Constant(e.value))
            .map_err(|err| usage(format!("--eps {},{},{}: {err}", e.k, e.l, e.value)))?;
    }
    let eps_label = if a.eps.is_empty() {
        "1".to_string()
    } else {
        a.eps
            .iter()
            .map(|e| format!("{}:{}={}", e.k, e.l, label(e.value)))
            .collect::<Vec<_>>()
            .join(";")
    };
    let glm = glm_config(a.max_iter);
    let family = Family::from(a.outcome_family);
    let eval = |d: &Dataset| -> causens_core::Result<(Vec<f64>, Vec<String>)> {
        let nuis = fit_multi_nuisances(d, family, &glm)?;
        let mut out = Vec::new();
        for &est in &a.estimator {
            out.push(multi_contrast(&contrast, MultiMethod::from(est), d, &nuis, &eps)?);
        }
        Ok((out, nuis.warnings.clone()))
    };
    warnings.extend(eval(&ds)?.1);
    let results = bootstrap_many(|d| eval(d).map(|r| r.0), &ds, &bcfg)?;
    let weights = a.contrast.0.iter().map(|w| label(*w)).collect::<Vec<_>>().join(":");
    let labels: Vec<Cell> = a
        .estimator
        .iter()
        .map(|est| Cell {
            estimand: format!("contrast({weights})"),
            estimator: est.name().into(),
            eps1: eps_label.clone(),
            eps0: "NA".into(),
        })
        .collect();

    let mut m = Manifest::new("sa-multi", a.boot.seed, a);
    m.inputs.push(input_info(&a.data.input)?);
    m.bootstrap_failed = max_failed(&results);
    m.warn(warnings);
    write_records(&to_records(&labels, &results), &a.out.out, &a.out.json, &mut m)?;
    m.write(&manifest_path(&a.out.manifest, &a.out.out))
}
