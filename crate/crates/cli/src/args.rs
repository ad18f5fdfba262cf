use std::ops::RangeInclusive;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ligand_svm::data::{CsvOptions, DataFormat, LabelColumn};
use ligand_svm::pipeline::ReportFormat;
use ligand_svm::qp::SolverConfig;
use ligand_svm::LossVariant;

#[derive(Debug, Parser)]
#[command(
    name = "ligand-svm",
    version,
    about = "Calibrated linear SVMs for ligand activity data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stratified split of one dataset into training, calibration and test files.
    Split(SplitArgs),
    /// Select C by cross-validation and train the final model.
    Train(TrainArgs),
    /// Fit the sigmoid calibration of a trained model.
    Calibrate(CalibrateArgs),
    /// Score samples with a stored model.
    Predict(PredictArgs),
    /// Evaluate a stored model on labelled data and choose the balanced threshold.
    Evaluate(EvaluateArgs),
    /// Run HyperOpt, training, calibration, thresholding and evaluation end to end.
    Pipeline(PipelineArgs),
    /// Write a synthetic two-class dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    L1,
    L2,
}

impl From<LossArg> for LossVariant {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::L1 => LossVariant::L1,
            LossArg::L2 => LossVariant::L2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Svmlight,
    Csv,
}

impl From<FormatArg> for DataFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Svmlight => DataFormat::Svmlight,
            FormatArg::Csv => DataFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportArg {
    Json,
    Text,
}

impl From<ReportArg> for ReportFormat {
    fn from(r: ReportArg) -> Self {
        match r {
            ReportArg::Json => ReportFormat::Json,
            ReportArg::Text => ReportFormat::Text,
        }
    }
}

/// Parses `lo..hi` (inclusive), e.g. `-7..7`.
pub fn parse_exponent_range(s: &str) -> Result<RangeInclusive<i32>, String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected lo..hi, got {s:?}"))?;
    let lo: i32 = lo.trim().parse().map_err(|_| format!("bad lower exponent {lo:?}"))?;
    let hi: i32 = hi.trim().parse().map_err(|_| format!("bad upper exponent {hi:?}"))?;
    if lo > hi {
        return Err(format!("empty exponent range {lo}..{hi}"));
    }
    Ok(lo..=hi)
}

/// Parses three comma-separated split fractions.
pub fn parse_fractions(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad fraction {x:?}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|v| format!("expected 3 fractions, got {}", v.len()))
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input file format.
    #[arg(long, value_enum, default_value = "svmlight")]
    pub format: FormatArg,
    /// CSV files start with a header row.
    #[arg(long)]
    pub header: bool,
    /// CSV label column: a 0-based index or a header name (default: last column).
    #[arg(long, value_name = "COL")]
    pub label_column: Option<String>,
}

impl DataArgs {
    pub fn csv(&self) -> CsvOptions {
        let label_column = match &self.label_column {
            None => LabelColumn::Last,
            Some(s) => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.clone()),
            },
        };
        CsvOptions {
            label_column,
            has_header: self.header,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Relative projected-gradient tolerance of the dual solver.
    #[arg(long, default_value_t = SolverConfig::default().rtol)]
    pub rtol: f64,
    /// Iteration cap of the dual solver.
    #[arg(long = "max-it", default_value_t = SolverConfig::default().max_iterations)]
    pub max_it: usize,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            rtol: self.rtol,
            max_iterations: self.max_it,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "l1")]
    pub loss: LossArg,
    /// Penalty grid C = 2^p for p in lo..hi.
    #[arg(long, value_name = "LO..HI", default_value = "-7..7", allow_hyphen_values = true,
          value_parser = parse_exponent_range)]
    pub c_exponents: RangeInclusive<i32>,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    /// Relaxed-bias constant appended to every sample.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Standardize features with training-set mean and deviation.
    #[arg(long)]
    pub scale: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub input: PathBuf,
    /// Train, calibration and test fractions.
    #[arg(long, default_value = "0.64,0.2,0.16", value_parser = parse_fractions)]
    pub fractions: [f64; 3],
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for train / calibration / test files.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub train: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model document to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labelled calibration data.
    pub data: PathBuf,
    /// Model document to write (default: overwrite --model).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub data_format: DataArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    pub data: PathBuf,
    /// Probability threshold; overrides the stored one.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Write predictions here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub data_format: DataArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub threshold_step: f64,
    #[arg(long, value_enum, default_value = "json")]
    pub report: ReportArg,
    /// Write the model with the selected threshold stored.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub data_format: DataArgs,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Single dataset, split by --fractions.
    #[arg(long, conflicts_with_all = ["train", "calibration", "test"], required_unless_present_all = ["train", "test"])]
    pub input: Option<PathBuf>,
    #[arg(long, requires = "test")]
    pub train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    pub calibration: Option<PathBuf>,
    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,
    #[arg(long, default_value = "0.64,0.2,0.16", value_parser = parse_fractions)]
    pub fractions: [f64; 3],
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.01)]
    pub threshold_step: f64,
    /// Fit the sigmoid on training scores instead of a calibration set.
    #[arg(long)]
    pub calibrate_on_train: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "text")]
    pub report: ReportArg,
    /// Directory for model.json and the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 20)]
    pub features: usize,
    #[arg(long, default_value_t = 0.63)]
    pub active_fraction: f64,
    /// Distance between the class means.
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "svmlight")]
    pub format: FormatArg,
    /// Write a CSV header row.
    #[arg(long)]
    pub header: bool,
}
