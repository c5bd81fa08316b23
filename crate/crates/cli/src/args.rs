use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use causens_core::ate::Method;
use causens_core::att::AttMethod;
use causens_core::glm::Family;
use causens_core::multi::MultiMethod;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "causens", version, about = "Sensitivity analysis for causal effects")]
pub struct Cli {
    /// Worker threads; defaults to CAUSENS_THREADS, then the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average effect over a grid of (eps1, eps0).
    SaAte(SaAteArgs),
    /// Effect on the treated over a list of eps0.
    SaAtt(SaAttArgs),
    /// Risk ratio over a grid of (eps1, eps0).
    SaRr(SaRatioArgs),
    /// Odds ratio over a grid of (eps1, eps0).
    SaOr(SaRatioArgs),
    /// Contour grid (CSV) and SVG from an sa-ate result file or a fresh grid.
    Contour(ContourArgs),
    /// Coverage / false-rejection table for the simulation study.
    Simulate(SimulateArgs),
    /// Survival-probability contrasts at given times.
    SaSurv(SaSurvArgs),
    /// Contrasts of a multi-valued treatment.
    SaMulti(SaMultiArgs),
    /// Leave-covariates-out benchmarks for eps1 and eps0.
    Calibrate(CalibrateArgs),
    /// Worst-case bounds for ranges of the sensitivity parameters.
    Bounds(BoundsArgs),
    /// Average effect with difference-scale sensitivity parameters.
    SaDiff(SaDiffArgs),
}

/// Comma-separated list of positive finite numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PosList(pub Vec<f64>);

impl FromStr for PosList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let vals = parse_floats(s)?;
        if let Some(v) = vals.iter().find(|v| !(**v > 0.0)) {
            return Err(format!("{v} is not positive"));
        }
        Ok(PosList(vals))
    }
}

/// Comma-separated list of finite numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_floats(s).map(FloatList)
    }
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Err("empty list".into());
    }
    s.split(',')
        .map(|part| {
            let t = part.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("`{t}` is not a number; expected a comma-separated list such as 0.9,1,1.1"))
        })
        .collect()
}

/// `lo,hi` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = parse_floats(s)?;
        if v.len() != 2 {
            return Err(format!("expected two numbers `lo,hi`, got {}", v.len()));
        }
        if v[0] > v[1] {
            return Err(format!("lo {} exceeds hi {}", v[0], v[1]));
        }
        Ok(Range { lo: v[0], hi: v[1] })
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Gaussian,
    Binomial,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gaussian => Family::Gaussian,
            FamilyArg::Binomial => Family::Binomial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AteEst {
    Pred,
    Proj,
    Ht,
    Hajek,
    Dr,
    Dr2,
    /// Bias-corrected nearest-neighbour matching.
    Match,
}

impl AteEst {
    pub fn method(self) -> Option<Method> {
        match self {
            AteEst::Pred => Some(Method::Pred),
            AteEst::Proj => Some(Method::Proj),
            AteEst::Ht => Some(Method::Ht),
            AteEst::Hajek => Some(Method::Hajek),
            AteEst::Dr => Some(Method::Dr),
            AteEst::Dr2 => Some(Method::Dr2),
            AteEst::Match => None,
        }
    }

    pub fn name(self) -> &'static str {
        self.method().map_or("match", |m| m.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioEst {
    Pred,
    Proj,
    Ht,
    Hajek,
    Dr,
    Dr2,
}

impl From<RatioEst> for Method {
    fn from(e: RatioEst) -> Self {
        match e {
            RatioEst::Pred => Method::Pred,
            RatioEst::Proj => Method::Proj,
            RatioEst::Ht => Method::Ht,
            RatioEst::Hajek => Method::Hajek,
            RatioEst::Dr => Method::Dr,
            RatioEst::Dr2 => Method::Dr2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AttEst {
    Reg,
    Ht,
    Hajek,
    Dr,
    Dr2,
}

impl From<AttEst> for AttMethod {
    fn from(e: AttEst) -> Self {
        match e {
            AttEst::Reg => AttMethod::Reg,
            AttEst::Ht => AttMethod::Ht,
            AttEst::Hajek => AttMethod::Hajek,
            AttEst::Dr => AttMethod::Dr,
            AttEst::Dr2 => AttMethod::Dr2,
        }
    }
}

/// Estimators with a regression / weighting / doubly robust trio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrioEst {
    Reg,
    Ht,
    Dr,
}

impl TrioEst {
    pub fn name(self) -> &'static str {
        match self {
            TrioEst::Reg => "reg",
            TrioEst::Ht => "ht",
            TrioEst::Dr => "dr",
        }
    }
}

impl From<TrioEst> for MultiMethod {
    fn from(e: TrioEst) -> Self {
        match e {
            TrioEst::Reg => MultiMethod::Reg,
            TrioEst::Ht => MultiMethod::Ht,
            TrioEst::Dr => MultiMethod::Dr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsEst {
    Pred,
    Reg,
    Proj,
    Ht,
    Hajek,
    Dr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimand {
    Ate,
    Att,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourValue {
    Est,
    CiLb,
    CiUb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleArg {
    Raw,
    Log,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "z")]
    pub treatment: String,
    #[arg(long, default_value = "y")]
    pub outcome: String,
    /// Comma-separated covariate names; all remaining columns when omitted.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    /// Result CSV.
    #[arg(long, default_value = "results.csv")]
    pub out: PathBuf,
    /// Optional JSON mirror of the result table.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Manifest path; defaults to the output path with `.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BootArgs {
    #[arg(long, default_value_t = 500)]
    pub n_boot: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Percentile bootstrap interval instead of estimate +- z se.
    #[arg(long)]
    pub percentile: bool,
    /// Extra attempts for a bootstrap replicate whose fit fails.
    #[arg(long, default_value_t = 100)]
    pub max_redraws: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Propensity model family [default: binomial].
    #[arg(long, value_enum)]
    pub pscore_family: Option<FamilyArg>,
    /// Outcome model family [default: gaussian; binomial for sa-rr / sa-or].
    #[arg(long, value_enum)]
    pub outcome_family: Option<FamilyArg>,
    /// Propensity truncation bounds `lo,hi`.
    #[arg(long, default_value = "0,1", allow_hyphen_values = true)]
    pub trunc_pscore: Range,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SaAteArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, default_value = "1")]
    pub eps1_list: PosList,
    #[arg(long, default_value = "1")]
    pub eps0_list: PosList,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "proj,ht,hajek,dr")]
    pub estimator: Vec<AteEst>,
    /// Matches per unit for `--estimator match`.
    #[arg(long, default_value_t = 1)]
    pub n_matches: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SaAttArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, default_value = "1")]
    pub eps0_list: PosList,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "reg,ht,hajek,dr")]
    pub estimator: Vec<AttEst>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SaRatioArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, default_value = "1")]
    pub eps1_list: PosList,
    #[arg(long, default_value = "1")]
    pub eps0_list: PosList,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "pred,proj,ht,hajek,dr")]
    pub estimator: Vec<RatioEst>,
    /// Report the logarithm of the ratio.
    #[arg(long)]
    pub log: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ContourArgs {
    /// Result CSV written by sa-ate.
    #[arg(long, conflicts_with = "input")]
    pub results: Option<PathBuf>,
    /// Recompute from data instead of reading `--results`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "z")]
    pub treatment: String,
    #[arg(long, default_value = "y")]
    pub outcome: String,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    #[arg(long, default_value = "0.8,1.25")]
    pub eps1_range: Range,
    #[arg(long, default_value = "0.8,1.25")]
    pub eps0_range: Range,
    /// Grid points per axis when recomputing.
    #[arg(long, default_value_t = 11)]
    pub grid_size: usize,
    #[arg(long, value_enum, default_value = "dr")]
    pub estimator: AteEst,
    #[arg(long, value_enum, default_value = "est")]
    pub value: ContourValue,
    /// Number of automatic contour levels.
    #[arg(long, default_value_t = 7)]
    pub levels: usize,
    /// Explicit contour levels, overriding `--levels`.
    #[arg(long, allow_hyphen_values = true)]
    pub level_values: Option<FloatList>,
    /// Calibration CSV whose per-covariate maxima are overlaid.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Long-format grid CSV.
    #[arg(long, default_value = "contour.csv")]
    pub out: PathBuf,
    /// SVG path; defaults to the grid path with `.svg`.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value = "0,0.2,0.3,0.5,1,1.5")]
    pub b_list: FloatList,
    #[arg(long, default_value = "1,1.10,1.16,1.28,1.60,1.93")]
    pub eps1_list: PosList,
    /// Monte Carlo replicates per b [default: 200, or 500 with --full-scale].
    #[arg(long)]
    pub n_mc: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub n_boot: usize,
    #[arg(long, default_value_t = 20_240_501)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Scale of the outcome regressions.
    #[arg(long, value_enum, default_value = "raw")]
    pub outcome_scale: ScaleArg,
    /// Full-size run with 500 replicates per b.
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long, default_value = "simulation.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SaSurvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Event indicator column (1 = event, 0 = censored).
    #[arg(long, default_value = "event")]
    pub event: String,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Time points at which to contrast the survival curves.
    #[arg(long)]
    pub times: FloatList,
    #[arg(long, default_value = "1")]
    pub eps1_list: PosList,
    #[arg(long, default_value = "1")]
    pub eps0_list: PosList,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "reg,ht,dr")]
    pub estimator: Vec<TrioEst>,
    /// Weighted Kaplan-Meier curves at every grid cell, long format.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SaMultiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub outcome_family: FamilyArg,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Contrast weights, one per level in order 1..K, summing to zero.
    #[arg(long, allow_hyphen_values = true)]
    pub contrast: FloatList,
    /// Off-diagonal sensitivity entry `k,l,value` (1-based levels); repeatable.
    #[arg(long = "eps")]
    pub eps: Vec<EpsEntry>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "reg,ht,dr")]
    pub estimator: Vec<TrioEst>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsEntry {
    pub k: usize,
    pub l: usize,
    pub value: f64,
}

impl FromStr for EpsEntry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err("expected `k,l,value`".into());
        }
        let level = |p: &str| p.parse::<usize>().map_err(|_| format!("`{p}` is not a level number"));
        let value: f64 = parts[2]
            .parse()
            .map_err(|_| format!("`{}` is not a number", parts[2]))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(format!("{value} is not positive"));
        }
        Ok(EpsEntry {
            k: level(parts[0])?,
            l: level(parts[1])?,
            value,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Covariates to leave out together, comma-separated; repeatable. Each
    /// covariate alone when omitted.
    #[arg(long)]
    pub drop: Vec<String>,
    /// Accepted for a uniform interface; calibration draws no random numbers.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, value_enum, default_value = "ate")]
    pub estimand: Estimand,
    /// Range for eps1 (ignored for att).
    #[arg(long, default_value = "1,1")]
    pub eps1_range: Range,
    #[arg(long, default_value = "1,1")]
    pub eps0_range: Range,
    /// Estimators; ate takes pred, proj, ht, hajek, dr [default: proj,ht,dr]
    /// and att takes reg, ht, hajek, dr [default: reg,ht,dr].
    #[arg(long, value_enum, value_delimiter = ',')]
    pub estimator: Option<Vec<BoundsEst>>,
    /// Accepted for a uniform interface; bounds draw no random numbers.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SaDiffArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Shifts `delta1 = E{Y(1)|Z=1,X} - E{Y(1)|Z=0,X}`.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub delta1_list: FloatList,
    /// Shifts `delta0 = E{Y(0)|Z=1,X} - E{Y(0)|Z=0,X}`.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub delta0_list: FloatList,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "reg,ht,dr")]
    pub estimator: Vec<TrioEst>,
}
