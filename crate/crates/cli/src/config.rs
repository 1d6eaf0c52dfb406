//! Experiment configuration, parsed from command-line flags and echoed
//! into every result record.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use spsd_core::cur::SelectionMethod;
use spsd_core::sketch::SketchMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Kernel approximation error of one SPSD model.
    Approx,
    /// Kernel PCA on the approximate kernel.
    Kpca,
    /// Spectral embedding from the approximate kernel.
    Spectral,
    /// CUR decomposition of a data matrix or image.
    Cur,
    /// Synthetic statistical benchmarks.
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    Libsvm,
    Csv,
    Pgm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// `U = W†` (for CUR: `U = (P_RᵀAP_C)†`).
    Nystrom,
    /// Frobenius-optimal U (for CUR: `C†AR†`).
    Prototype,
    /// Sketched least-squares U.
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchKind {
    /// Adversarial block matrix against the closed-form lower bound.
    LowerBound,
    /// Fast model within `1+eps` of the prototype on an RBF kernel.
    FastVsPrototype,
    /// Fast CUR within `1+eps` of the optimal U on a Gaussian matrix.
    FastCur,
}

/// Sketch sizes: `auto` (size recipe at `--eps`) or a comma-separated
/// sweep such as `40,80,160`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SizeSpec {
    Auto,
    Values(Vec<usize>),
}

impl FromStr for SizeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(SizeSpec::Auto);
        }
        let values = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&v| v > 0)
                    .ok_or_else(|| format!("bad sketch size {t:?}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SizeSpec::Values(values))
    }
}

impl fmt::Display for SizeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeSpec::Auto => write!(f, "auto"),
            SizeSpec::Values(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

impl From<SizeSpec> for String {
    fn from(s: SizeSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for SizeSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

/// RBF scale: a positive number, or `auto` to calibrate it so that the
/// top-k spectral share of the kernel hits `--eta-target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SigmaSpec {
    Auto,
    Value(f64),
}

impl FromStr for SigmaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(SigmaSpec::Auto);
        }
        match s.trim().parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(SigmaSpec::Value(v)),
            _ => Err(format!("sigma must be a positive number or auto, got {s:?}")),
        }
    }
}

impl From<SigmaSpec> for String {
    fn from(s: SigmaSpec) -> String {
        match s {
            SigmaSpec::Auto => "auto".into(),
            SigmaSpec::Value(v) => v.to_string(),
        }
    }
}

impl TryFrom<String> for SigmaSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

fn parse_sketch(s: &str) -> Result<SketchMethod, String> {
    match s {
        "uniform" => Ok(SketchMethod::Uniform),
        "leverage" => Ok(SketchMethod::Leverage),
        "gaussian" => Ok(SketchMethod::Gaussian),
        "srht" => Ok(SketchMethod::Srht),
        "count-sketch" | "count" => Ok(SketchMethod::CountSketch),
        _ => Err(format!(
            "unknown sketch {s:?} (uniform, leverage, gaussian, srht, count-sketch)"
        )),
    }
}

fn parse_select(s: &str) -> Result<SelectionMethod, String> {
    match s {
        "uniform" => Ok(SelectionMethod::Uniform),
        "leverage" => Ok(SelectionMethod::Leverage),
        _ => Err(format!("unknown selection {s:?} (uniform, leverage)")),
    }
}

/// Sketched kernel approximation and CUR experiments.
#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "spsd", version, about)]
pub struct ExperimentConfig {
    #[arg(long, value_enum)]
    pub task: Task,

    /// Input file (LIBSVM, CSV or PGM).
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Input format; guessed from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,

    /// Keep a seeded random subset of this many points.
    #[arg(long)]
    pub subsample: Option<usize>,

    #[arg(long, value_enum, default_value = "fast")]
    pub model: ModelKind,

    /// uniform, leverage, gaussian, srht or count-sketch.
    #[arg(long, value_parser = parse_sketch, default_value = "leverage")]
    pub sketch: SketchMethod,

    /// How CUR picks its columns and rows: uniform or leverage.
    #[arg(long, value_parser = parse_select, default_value = "leverage")]
    pub select: SelectionMethod,

    /// Columns in C.
    #[arg(long, default_value_t = 10)]
    pub c: usize,

    /// Rows in R for CUR (defaults to c).
    #[arg(long)]
    pub r: Option<usize>,

    /// Sketch size(s): a number, a comma list, or auto.
    #[arg(long, default_value = "auto")]
    pub s: SizeSpec,

    /// Target relative error for the auto size recipes and benchmarks.
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,

    /// RBF kernel scale, or auto.
    #[arg(long, default_value = "auto")]
    pub sigma: SigmaSpec,

    /// Spectral share of the top-k eigenvalues that auto sigma aims for.
    #[arg(long, default_value_t = 0.9)]
    pub eta_target: f64,

    /// Target rank: eigenvectors for kpca/spectral, misalignment for approx,
    /// blocks for the lower-bound benchmark.
    #[arg(long)]
    pub k: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 1)]
    pub trials: usize,

    /// Benchmark to run with --task bench.
    #[arg(long, value_enum)]
    pub bench: Option<BenchKind>,

    /// Benchmark size n (matrix order or number of points / columns).
    #[arg(long)]
    pub n: Option<usize>,

    /// Benchmark row count m for fast-cur.
    #[arg(long)]
    pub m: Option<usize>,

    /// Off-diagonal value of the lower-bound block matrix.
    #[arg(long, default_value_t = 0.999)]
    pub alpha: f64,

    /// Write the JSON record here instead of stdout.
    #[serde(skip)]
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Write one CSV row per sketch size here.
    #[serde(skip)]
    #[arg(long)]
    pub csv: Option<PathBuf>,

    /// Leave wall-clock timings out of the record.
    #[arg(long)]
    pub no_timings: bool,

    /// Worker threads for concurrent trials.
    #[serde(skip)]
    #[arg(long, env = "SPSD_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

impl ExperimentConfig {
    /// Checks that the flags required by the task are present and in range.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError(m.to_string()));
        if self.trials == 0 {
            return fail("--trials must be at least 1");
        }
        if self.c == 0 {
            return fail("--c must be at least 1");
        }
        if self.r == Some(0) {
            return fail("--r must be at least 1");
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return fail("--eps must lie in (0, 1]");
        }
        if !(self.eta_target > 0.0 && self.eta_target < 1.0) {
            return fail("--eta-target must lie in (0, 1)");
        }
        if self.k == Some(0) {
            return fail("--k must be at least 1");
        }
        if self.threads == Some(0) {
            return fail("--threads must be at least 1");
        }
        match self.task {
            Task::Bench => {
                if self.bench.is_none() {
                    return fail("--task bench needs --bench");
                }
                if !(0.0..1.0).contains(&self.alpha) {
                    return fail("--alpha must lie in [0, 1)");
                }
            }
            _ => {
                if self.data.is_none() {
                    return fail("this task needs --data");
                }
            }
        }
        if matches!(self.task, Task::Kpca | Task::Spectral) && self.k.is_none() {
            return fail("kpca and spectral need --k");
        }
        let kernel_task = matches!(self.task, Task::Approx | Task::Kpca | Task::Spectral)
            || self.bench == Some(BenchKind::FastVsPrototype);
        if kernel_task && self.sigma == SigmaSpec::Auto && self.k.is_none() {
            return fail("--sigma auto needs --k");
        }
        Ok(())
    }

    /// Format from `--format` or the file extension.
    pub fn data_format(&self) -> DataFormat {
        if let Some(f) = self.format {
            return f;
        }
        let ext = self
            .data
            .as_ref()
            .and_then(|p| p.extension())
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("csv") => DataFormat::Csv,
            Some("pgm") | Some("pnm") => DataFormat::Pgm,
            _ => DataFormat::Libsvm,
        }
    }

    pub fn rows(&self) -> usize {
        self.r.unwrap_or(self.c)
    }
}
