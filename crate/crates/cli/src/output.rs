use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use causens_core::dataset::{load_csv, validate, ColumnSpec, Dataset, Mode};
use causens_core::glm::GlmConfig;
use causens_core::inference::BootstrapConfig;
use causens_core::nuisance::NuisanceConfig;
use causens_core::records::{write_records_csv, EstimateRecord};
use causens_core::glm::Family;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::{BootArgs, DataArgs, ModelArgs};

/// Bad flag values or inputs; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for anything the user can fix by changing flags or the input file.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use causens_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::MissingColumn(_)
                | E::Parse { .. }
                | E::Validation(_)
                | E::InvalidArgument(_)
                | E::DimensionMismatch(_)
                | E::Csv(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

#[derive(Debug, Clone, Serialize)]
pub struct InputInfo {
    pub path: String,
    pub sha256: String,
}

pub fn input_info(path: &Path) -> Result<InputInfo> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputInfo {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Reproducibility record written next to every output. It carries no
/// timestamps or thread counts so that reruns compare byte for byte.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a C,
    pub inputs: Vec<InputInfo>,
    pub outputs: Vec<String>,
    /// Largest number of failed bootstrap replicates over all cells.
    pub bootstrap_failed: Option<usize>,
    pub warnings: Vec<String>,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(command: &'a str, seed: u64, config: &'a C) -> Self {
        Self {
            tool: "causens",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            bootstrap_failed: None,
            warnings: Vec::new(),
        }
    }

    pub fn warn(&mut self, w: impl IntoIterator<Item = String>) {
        for w in w {
            if !self.warnings.contains(&w) {
                self.warnings.push(w);
            }
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes the manifest and echoes warnings to stderr.
    pub fn write(&self, path: &Path) -> Result<()> {
        for w in &self.warnings {
            eprintln!("warning: {w}");
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn manifest_path(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| out.with_extension("manifest.json"))
}

fn header(path: &Path) -> Result<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(r.headers()?.iter().map(str::to_string).collect())
}

/// Loads and validates the input; returns the dataset and validation warnings.
pub fn load(data: &DataArgs, event: Option<&str>, mode: Mode) -> Result<(Dataset, Vec<String>)> {
    if !data.input.is_file() {
        return Err(usage(format!(
            "--input: file `{}` not found",
            data.input.display()
        )));
    }
    let covariates = if data.covariates.is_empty() {
        header(&data.input)?
            .into_iter()
            .filter(|h| h != &data.treatment && h != &data.outcome && Some(h.as_str()) != event)
            .collect()
    } else {
        data.covariates.clone()
    };
    let spec = ColumnSpec {
        treatment: data.treatment.clone(),
        outcome: data.outcome.clone(),
        covariates,
        event: event.map(str::to_string),
    };
    let ds = load_csv(&data.input, &spec, mode)
        .with_context(|| format!("loading {}", data.input.display()))?;
    let warnings = validate(&ds, mode).unwrap_or_default();
    Ok((ds, warnings))
}

pub fn glm_config(max_iter: usize) -> GlmConfig {
    GlmConfig {
        max_iter,
        ..GlmConfig::default()
    }
}

pub fn nuisance_config(m: &ModelArgs, default_outcome: Family) -> Result<NuisanceConfig> {
    let (lo, hi) = (m.trunc_pscore.lo, m.trunc_pscore.hi);
    if !(0.0..0.5).contains(&lo) || !(hi > 0.5 && hi <= 1.0) {
        return Err(usage(format!(
            "--trunc-pscore: need 0 <= lo < 0.5 < hi <= 1, got {lo},{hi}"
        )));
    }
    Ok(NuisanceConfig {
        pscore_family: m.pscore_family.map_or(Family::Binomial, Family::from),
        outcome_family: m.outcome_family.map_or(default_outcome, Family::from),
        trunc: (lo, hi),
        glm: glm_config(m.max_iter),
        ..NuisanceConfig::default()
    })
}

pub fn boot_config(b: &BootArgs) -> Result<BootstrapConfig> {
    if b.n_boot < 2 {
        return Err(usage(format!("--n-boot: need at least 2, got {}", b.n_boot)));
    }
    if !(b.ci_level > 0.0 && b.ci_level < 1.0) {
        return Err(usage(format!("--ci-level: must lie in (0, 1), got {}", b.ci_level)));
    }
    Ok(BootstrapConfig {
        n_boot: b.n_boot,
        ci_level: b.ci_level,
        seed: b.seed,
        max_redraws: b.max_redraws,
        percentile: b.percentile,
    })
}

/// Result CSV plus the optional JSON mirror.
pub fn write_records<C: Serialize>(
    records: &[EstimateRecord],
    out: &Path,
    json: &Option<PathBuf>,
    manifest: &mut Manifest<'_, C>,
) -> Result<()> {
    write_records_csv(out, records).with_context(|| format!("writing {}", out.display()))?;
    manifest.output(out);
    if let Some(j) = json {
        write_json(records, j)?;
        manifest.output(j);
    }
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Shortest decimal form, as used for the `eps1` / `eps0` columns.
pub fn label(v: f64) -> String {
    format!("{v}")
}
