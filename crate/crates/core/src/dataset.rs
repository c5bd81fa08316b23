//! Observational data: covariates, treatment, outcome and an optional
//! event indicator for right-censored outcomes.
//!
//! A [`Dataset`] only checks that its columns have matching lengths when it
//! is built. The stronger per-module invariants (binary treatment, both arms
//! populated, finite values, event indicator present) are checked by
//! [`validate`], which reports every violation at once.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Which estimation module a dataset is being prepared for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Binary,
    Multi,
    Survival,
}

/// Mapping from CSV header names to the roles they play.
#[derive(Debug, Clone, Default)]
pub struct ColumnSpec {
    pub treatment: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub event: Option<String>,
}

impl ColumnSpec {
    pub fn new(treatment: &str, outcome: &str, covariates: &[&str]) -> Self {
        Self {
            treatment: treatment.to_string(),
            outcome: outcome.to_string(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            event: None,
        }
    }

    pub fn with_event(mut self, event: &str) -> Self {
        self.event = Some(event.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    names: Vec<String>,
    z: Vec<usize>,
    y: Vec<f64>,
    delta: Option<Vec<u8>>,
}

impl Dataset {
    /// Builds a dataset, checking only that the pieces fit together.
    pub fn new(
        x: Array2<f64>,
        names: Vec<String>,
        z: Vec<usize>,
        y: Vec<f64>,
        delta: Option<Vec<u8>>,
    ) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "covariate matrix has {} rows but outcome has {n}",
                x.nrows()
            )));
        }
        if z.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "treatment has {} entries but outcome has {n}",
                z.len()
            )));
        }
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate names for {} columns",
                names.len(),
                x.ncols()
            )));
        }
        Ok(Self {
            x,
            names,
            z,
            y,
            delta,
        })
    }

    /// Convenience constructor with generated covariate names `x1..xp`.
    pub fn from_parts(x: Array2<f64>, z: Vec<usize>, y: Vec<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(x, names, z, y, None)
    }

    pub fn with_delta(mut self, delta: Vec<u8>) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn delta(&self) -> Option<&[u8]> {
        self.delta.as_deref()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    /// Number of units with treatment level `level`.
    pub fn count_level(&self, level: usize) -> usize {
        self.z.iter().filter(|&&z| z == level).count()
    }

    /// Position of a covariate by name.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Rows `idx` in the given order (repeats allowed).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            names: self.names.clone(),
            z: idx.iter().map(|&i| self.z[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            delta: self
                .delta
                .as_ref()
                .map(|d| idx.iter().map(|&i| d[i]).collect()),
        }
    }

    /// Keeps only the listed covariate columns, in the listed order.
    pub fn select_covariates(&self, cols: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = cols.iter().find(|&&j| j >= self.p()) {
            return Err(Error::InvalidArgument(format!(
                "covariate index {bad} out of range for p = {}",
                self.p()
            )));
        }
        Ok(Dataset {
            x: self.x.select(Axis(1), cols),
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            z: self.z.clone(),
            y: self.y.clone(),
            delta: self.delta.clone(),
        })
    }

    /// Same data with a replaced outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(
            self.x.clone(),
            self.names.clone(),
            self.z.clone(),
            y,
            self.delta.clone(),
        )
    }

    /// Treatment indicator as a float, for binary data.
    #[inline]
    pub(crate) fn zf(&self, i: usize) -> f64 {
        if self.z[i] == 1 {
            1.0
        } else {
            0.0
        }
    }
}

/// One violated data invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewRows(usize),
    TreatmentNotBinary { row: usize, value: usize },
    ArmEmpty { treated: bool },
    ArmTooSmall { level: usize, count: usize },
    LevelOutOfRange { row: usize, value: usize },
    NonFiniteOutcome { row: usize },
    NonFiniteCovariate { row: usize, column: String },
    EventRequired,
    EventLength { expected: usize, found: usize },
    EventNotBinary { row: usize, value: u8 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewRows(n) => write!(f, "need at least 2 rows, found {n}"),
            Violation::TreatmentNotBinary { row, value } => {
                write!(f, "treatment not binary (value {value} at row {row})")
            }
            Violation::ArmEmpty { treated: true } => f.write_str("treated arm empty"),
            Violation::ArmEmpty { treated: false } => f.write_str("control arm empty"),
            Violation::ArmTooSmall { level, count } => write!(
                f,
                "treatment level {level} has {count} unit(s), at least 2 required"
            ),
            Violation::LevelOutOfRange { row, value } => write!(
                f,
                "treatment level {value} at row {row} invalid: levels must be 1..K"
            ),
            Violation::NonFiniteOutcome { row } => write!(f, "non-finite outcome at row {row}"),
            Violation::NonFiniteCovariate { row, column } => {
                write!(f, "non-finite covariate `{column}` at row {row}")
            }
            Violation::EventRequired => f.write_str("event indicator required"),
            Violation::EventLength { expected, found } => write!(
                f,
                "event indicator has {found} entries, expected {expected}"
            ),
            Violation::EventNotBinary { row, value } => {
                write!(f, "event indicator not 0/1 (value {value} at row {row})")
            }
        }
    }
}

/// Checks every invariant relevant to `mode`.
///
/// Returns the list of warnings (e.g. constant covariate columns) when the
/// data is usable, otherwise every violation found. Rows are reported
/// 1-based to match spreadsheet line numbers of the data rows.
pub fn validate(ds: &Dataset, mode: Mode) -> std::result::Result<Vec<String>, Vec<Violation>> {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let n = ds.n();
    if n < 2 {
        violations.push(Violation::TooFewRows(n));
    }

    for (i, y) in ds.y.iter().enumerate() {
        if !y.is_finite() {
            violations.push(Violation::NonFiniteOutcome { row: i + 1 });
        }
    }
    for (i, row) in ds.x.outer_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                violations.push(Violation::NonFiniteCovariate {
                    row: i + 1,
                    column: ds.names[j].clone(),
                });
            }
        }
    }

    match mode {
        Mode::Binary | Mode::Survival => {
            let mut counts = [0usize; 2];
            for (i, &z) in ds.z.iter().enumerate() {
                if z > 1 {
                    violations.push(Violation::TreatmentNotBinary { row: i + 1, value: z });
                } else {
                    counts[z] += 1;
                }
            }
            for (level, &count) in counts.iter().enumerate() {
                if count == 0 {
                    violations.push(Violation::ArmEmpty {
                        treated: level == 1,
                    });
                } else if count < 2 {
                    violations.push(Violation::ArmTooSmall { level, count });
                }
            }
        }
        Mode::Multi => {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for (i, &z) in ds.z.iter().enumerate() {
                if z == 0 {
                    violations.push(Violation::LevelOutOfRange { row: i + 1, value: z });
                } else {
                    *counts.entry(z).or_default() += 1;
                }
            }
            let k = counts.keys().next_back().copied().unwrap_or(0);
            for level in 1..=k {
                let count = counts.get(&level).copied().unwrap_or(0);
                if count < 2 {
                    violations.push(Violation::ArmTooSmall { level, count });
                }
            }
            if k == 1 {
                violations.push(Violation::ArmTooSmall { level: 2, count: 0 });
            }
        }
    }

    match (mode, &ds.delta) {
        (Mode::Survival, None) => violations.push(Violation::EventRequired),
        (_, Some(d)) => {
            if d.len() != n {
                violations.push(Violation::EventLength {
                    expected: n,
                    found: d.len(),
                });
            }
            for (i, &v) in d.iter().enumerate() {
                if v > 1 {
                    violations.push(Violation::EventNotBinary { row: i + 1, value: v });
                }
            }
        }
        _ => {}
    }

    for (j, col) in ds.x.axis_iter(Axis(1)).enumerate() {
        if n > 0 && col.iter().all(|&v| v == col[0]) {
            warnings.push(format!(
                "covariate `{}` is constant; it will be dropped by the rank check",
                ds.names[j]
            ));
        }
    }

    if violations.is_empty() {
        Ok(warnings)
    } else {
        Err(violations)
    }
}

/// Reads a header-bearing CSV, selecting columns by name, then validates.
pub fn load_csv(path: impl AsRef<Path>, spec: &ColumnSpec, mode: Mode) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let zi = find(&spec.treatment)?;
    let yi = find(&spec.outcome)?;
    let xi: Vec<usize> = spec
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    let di = spec.event.as_deref().map(find).transpose()?;

    let mut z = Vec::new();
    let mut y = Vec::new();
    let mut delta = di.map(|_| Vec::new());
    let mut xs: Vec<f64> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let num = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: header[col].to_string(),
                value: raw.to_string(),
            })
        };
        let integral = |col: usize| -> Result<usize> {
            let v = num(col)?;
            if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: header[col].to_string(),
                    value: record.get(col).unwrap_or("").to_string(),
                });
            }
            Ok(v as usize)
        };
        z.push(integral(zi)?);
        y.push(num(yi)?);
        for &c in &xi {
            xs.push(num(c)?);
        }
        if let (Some(d), Some(col)) = (delta.as_mut(), di) {
            let v = integral(col)?;
            d.push(u8::try_from(v).unwrap_or(u8::MAX));
        }
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, xi.len()), xs)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let ds = Dataset::new(x, spec.covariates.clone(), z, y, delta)?;
    validate(&ds, mode).map_err(Error::Validation)?;
    Ok(ds)
}

/// Writes a dataset as CSV with shortest round-trip float formatting.
///
/// Columns: `z`, `y`, optional `event`, then covariates by name.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["z".to_string(), "y".to_string()];
    if ds.delta.is_some() {
        header.push("event".to_string());
    }
    header.extend(ds.names.iter().cloned());
    writeln!(out, "{}", header.join(","))?;
    for i in 0..ds.n() {
        let mut fields = vec![ds.z[i].to_string(), format!("{:?}", ds.y[i])];
        if let Some(d) = &ds.delta {
            fields.push(d[i].to_string());
        }
        fields.extend(ds.x.row(i).iter().map(|v| format!("{v:?}")));
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// The [`ColumnSpec`] matching the layout produced by [`write_csv`].
pub fn written_spec(ds: &Dataset) -> ColumnSpec {
    ColumnSpec {
        treatment: "z".into(),
        outcome: "y".into(),
        covariates: ds.names.clone(),
        event: ds.delta.as_ref().map(|_| "event".into()),
    }
}
