//! End-to-end run: load/split → HyperOpt → train → calibrate → threshold →
//! evaluate, producing a self-contained report.
//!
//! All randomness flows from `PipelineConfig::seed` through
//! [`derive_seed`](crate::seed::derive_seed) with fixed stage names.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_score, fit_platt, CalibrationSet, NewtonConfig, SigmoidCalibration};
use crate::data::{augment, load_dataset, stratified_split, CsvOptions, DataFormat, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{brier, evaluate, EvaluationReport};
use crate::model_select::{apply_threshold, grid_search_c, select_threshold, GridSpec, ThresholdResult};
use crate::persist::{FeatureScaling, ModelDocument};
use crate::qp::SolverConfig;
use crate::seed::derive_seed;
use crate::svm::{gram_rank, label_from_score, scores, train, LossVariant, TrainingDiagnostics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSpec {
    /// Pre-split files. `calibration` may be omitted with `calibrate_on_train`.
    Files {
        train: PathBuf,
        calibration: Option<PathBuf>,
        test: PathBuf,
    },
    /// One file split by stratified sampling into train / calibration / test.
    Single { path: PathBuf, fractions: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub inputs: InputSpec,
    pub format: DataFormat,
    pub csv: CsvOptions,
    pub loss: LossVariant,
    pub c_exponents: Vec<i32>,
    pub folds: usize,
    pub solver: SolverConfig,
    pub newton: NewtonConfig,
    pub gamma: f64,
    pub threshold_step: f64,
    pub calibrate_on_train: bool,
    pub scale_features: bool,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub report_format: ReportFormat,
}

impl PipelineConfig {
    pub fn new(inputs: InputSpec) -> Self {
        Self {
            inputs,
            format: DataFormat::Svmlight,
            csv: CsvOptions::default(),
            loss: LossVariant::L1,
            c_exponents: GridSpec::default().exponents,
            folds: 3,
            solver: SolverConfig::default(),
            newton: NewtonConfig::default(),
            gamma: 1.0,
            threshold_step: 0.01,
            calibrate_on_train: false,
            scale_features: false,
            seed: 0,
            output: None,
            report_format: ReportFormat::Json,
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            exponents: self.c_exponents.clone(),
            folds: self.folds,
            seed: derive_seed(self.seed, "cv"),
        }
    }

    fn validate(&self) -> Result<()> {
        self.grid().validate()?;
        self.solver.validate()?;
        self.newton.validate()?;
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        crate::model_select::threshold_grid(self.threshold_step)?;
        match &self.inputs {
            InputSpec::Files { calibration: None, .. } if !self.calibrate_on_train => Err(Error::Usage(
                "a calibration dataset is required unless calibrating on the training set".into(),
            )),
            InputSpec::Single { fractions, .. } => {
                SplitSpec::new(fractions[0], fractions[1], fractions[2], 0).map(|_| ())
            }
            _ => Ok(()),
        }
    }
}

/// The three datasets a pipeline run works on.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub calibration: Option<Dataset>,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCharacteristics {
    pub role: String,
    pub name: String,
    pub n_features: usize,
    pub active: usize,
    pub inactive: usize,
    pub total: usize,
    pub active_percent: f64,
    pub inactive_percent: f64,
}

impl DatasetCharacteristics {
    fn of(role: &str, d: &Dataset) -> Self {
        let (active, inactive) = d.class_counts();
        let total = d.n_samples();
        Self {
            role: role.into(),
            name: d.name().into(),
            n_features: d.n_features(),
            active,
            inactive,
            total,
            active_percent: 100.0 * active as f64 / total as f64,
            inactive_percent: 100.0 * inactive as f64 / total as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointSummary {
    pub exponent: i32,
    pub c: f64,
    pub accumulated_score: f64,
    pub mean_score: f64,
    pub all_folds_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperOptSummary {
    pub best_c: f64,
    pub best_exponent: i32,
    pub folds: usize,
    pub training_runs: usize,
    pub grid: Vec<GridPointSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub loss: LossVariant,
    pub penalty_c: f64,
    pub gamma: f64,
    pub bias: f64,
    pub n_features: usize,
    pub augmented_rank: usize,
    pub diagnostics: TrainingDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedSection {
    /// `"calibration"` or `"training"`.
    pub fitted_on: String,
    pub sigmoid: SigmoidCalibration,
    pub brier: f64,
    pub threshold: ThresholdResult,
    pub evaluation: EvaluationReport,
}

/// Hessian-vector products spent per phase (power iteration included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverWork {
    pub hyperopt_hessian_applications: usize,
    pub training_hessian_applications: usize,
    pub total_hessian_applications: usize,
}

/// Wall-clock seconds per phase, from a monotonic clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub load_seconds: f64,
    pub hyperopt_seconds: f64,
    pub training_seconds: f64,
    pub calibration_seconds: f64,
    pub evaluation_seconds: f64,
    pub total_seconds: f64,
}

impl Timing {
    pub fn phase_sum(&self) -> f64 {
        self.load_seconds
            + self.hyperopt_seconds
            + self.training_seconds
            + self.calibration_seconds
            + self.evaluation_seconds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub tool: ToolInfo,
    pub config: PipelineConfig,
    pub datasets: Vec<DatasetCharacteristics>,
    pub hyperopt: HyperOptSummary,
    pub model: ModelSummary,
    pub uncalibrated: EvaluationReport,
    pub calibrated: CalibratedSection,
    pub solver_work: SolverWork,
    pub warnings: Vec<String>,
    pub timing: Timing,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON without the `timing` section; identical across reruns of one
    /// configuration.
    pub fn reproducible_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timing");
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Text => self.to_text(),
        }
    }

    /// Aligned text tables: dataset characteristics, uncalibrated scores,
    /// calibrated scores and elapsed time.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let loss = self.model.loss;
        let _ = writeln!(s, "{} {}", self.tool.name, self.tool.version);
        let _ = writeln!(s);
        let _ = writeln!(s, "Dataset characteristics");
        let _ = writeln!(
            s,
            "{:<14} {:>18} {:>18} {:>7}",
            "split", "#active", "#inactive", "total"
        );
        for d in &self.datasets {
            let _ = writeln!(
                s,
                "{:<14} {:>18} {:>18} {:>7}",
                d.role,
                format!("{} ({:.2} %)", d.active, d.active_percent),
                format!("{} ({:.2} %)", d.inactive, d.inactive_percent),
                d.total
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Uncalibrated model ({}-fold HyperOpt)", self.hyperopt.folds);
        let _ = writeln!(
            s,
            "{:<5} {:>8} {:>9} {:>9} {:>6} {:>6}",
            "loss", "C_BE", "Pre. [%]", "Sen. [%]", "F1", "AUC"
        );
        let u = &self.uncalibrated;
        let _ = writeln!(
            s,
            "{:<5} {:>8} {:>9.2} {:>9.2} {:>6.2} {:>6.2}",
            loss,
            format!("2^{}", self.hyperopt.best_exponent),
            100.0 * u.precision,
            100.0 * u.sensitivity,
            u.f1,
            u.auc
        );
        let _ = writeln!(s);
        let c = &self.calibrated;
        let _ = writeln!(
            s,
            "Calibrated model (A = {:.6}, B = {:.6}, fitted on {})",
            c.sigmoid.a, c.sigmoid.b, c.fitted_on
        );
        let _ = writeln!(
            s,
            "{:<5} {:>8} {:>6} {:>9} {:>9} {:>6}",
            "loss", "Brier", "Thr.", "Pre. [%]", "Sen. [%]", "AUC"
        );
        let _ = writeln!(
            s,
            "{:<5} {:>8.4} {:>6.2} {:>9.2} {:>9.2} {:>6.2}",
            loss,
            c.brier,
            c.threshold.threshold,
            100.0 * c.evaluation.precision,
            100.0 * c.evaluation.sensitivity,
            c.evaluation.auc
        );
        let _ = writeln!(s);
        let t = &self.timing;
        let _ = writeln!(s, "Elapsed time [s]");
        let _ = writeln!(
            s,
            "{:<5} {:>9} {:>9} {:>11} {:>9}",
            "loss", "HyperOpt", "Training", "Calibration", "Total"
        );
        let _ = writeln!(
            s,
            "{:<5} {:>9.2} {:>9.2} {:>11.2} {:>9.2}",
            loss, t.hyperopt_seconds, t.training_seconds, t.calibration_seconds, t.total_seconds
        );
        let _ = writeln!(
            s,
            "Hessian applications: {}",
            self.solver_work.total_hessian_applications
        );
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::NotFound {
            what: what.into(),
            path: path.to_path_buf(),
        })
    }
}

/// Loads (and if needed splits) the input data. Every referenced file is
/// checked before anything is parsed.
pub fn load_splits(cfg: &PipelineConfig) -> Result<Splits> {
    match &cfg.inputs {
        InputSpec::Files {
            train,
            calibration,
            test,
        } => {
            require(train, "training dataset")?;
            if let Some(c) = calibration {
                require(c, "calibration dataset")?;
            }
            require(test, "test dataset")?;
            let load = |p: &PathBuf| load_dataset(p, cfg.format, &cfg.csv);
            Ok(Splits {
                train: load(train)?,
                calibration: calibration.as_ref().map(load).transpose()?,
                test: load(test)?,
            })
        }
        InputSpec::Single { path, fractions } => {
            require(path, "dataset")?;
            let d = load_dataset(path, cfg.format, &cfg.csv)?;
            let spec = SplitSpec::new(fractions[0], fractions[1], fractions[2], derive_seed(cfg.seed, "split"))?;
            let (train, calibration, test) = stratified_split(&d, &spec)?;
            Ok(Splits {
                train,
                calibration: Some(calibration),
                test,
            })
        }
    }
}

/// Result of a pipeline run: the report plus the model document it describes.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub model: ModelDocument,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let splits = load_splits(cfg).map_err(|e| e.in_stage("load"))?;
    let load_seconds = start.elapsed().as_secs_f64();
    let mut out = run_on_splits(cfg, splits)?;
    out.report.timing.load_seconds += load_seconds;
    out.report.timing.total_seconds = start.elapsed().as_secs_f64();
    if let Some(dir) = &cfg.output {
        write_outputs(&out, dir, cfg.report_format).map_err(|e| e.in_stage("output"))?;
    }
    Ok(out)
}

/// Writes `model.json` and `report.json` / `report.txt` into `dir`.
pub fn write_outputs(out: &PipelineOutput, dir: &Path, format: ReportFormat) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    out.model.save(dir.join("model.json"))?;
    let (name, body) = match format {
        ReportFormat::Json => ("report.json", out.report.to_json() + "\n"),
        ReportFormat::Text => ("report.txt", out.report.to_text()),
    };
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|source| Error::Io { path, source })
}

/// Runs every stage after loading.
pub fn run_on_splits(cfg: &PipelineConfig, splits: Splits) -> Result<PipelineOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let mut warnings = Vec::new();

    let mut datasets = vec![DatasetCharacteristics::of("training", &splits.train)];
    if let Some(c) = &splits.calibration {
        datasets.push(DatasetCharacteristics::of("calibration", c));
    }
    datasets.push(DatasetCharacteristics::of("test", &splits.test));

    let scaling = cfg.scale_features.then(|| FeatureScaling::fit(&splits.train));
    let prepare = |d: &Dataset| -> Result<Dataset> {
        match &scaling {
            Some(s) => s.apply(d),
            None => Ok(d.clone()),
        }
    };
    let train_set = augment(prepare(&splits.train)?, cfg.gamma)?;
    let test_set = prepare(&splits.test).map_err(|e| e.in_stage("load"))?;
    let calib_source = if cfg.calibrate_on_train {
        None
    } else {
        Some(
            splits
                .calibration
                .as_ref()
                .ok_or_else(|| Error::Usage("no calibration dataset".into()))
                .and_then(prepare)
                .map_err(|e| e.in_stage("load"))?,
        )
    };
    let prep_seconds = start.elapsed().as_secs_f64();

    // HyperOpt
    let t = Instant::now();
    let cv = grid_search_c(&train_set, cfg.loss, &cfg.grid(), &cfg.solver).map_err(|e| e.in_stage("hyperopt"))?;
    let hyperopt_seconds = t.elapsed().as_secs_f64();
    if cv.per_c.iter().any(|p| p.folds.iter().any(|f| !f.converged)) {
        warnings.push("some cross-validation solves hit the iteration cap".into());
    }

    // final model at C_BE
    let t = Instant::now();
    let model = train(&train_set, cfg.loss, cv.best_c, &cfg.solver).map_err(|e| e.in_stage("training"))?;
    let augmented_rank = gram_rank(&train_set, 1e-10);
    let training_seconds = t.elapsed().as_secs_f64();
    if !model.diagnostics.converged {
        warnings.push(format!(
            "final training solve stopped after {} iterations without meeting rtol",
            model.diagnostics.iterations
        ));
    }

    // Platt scaling
    let t = Instant::now();
    let (fitted_on, calib_data) = match &calib_source {
        Some(d) => ("calibration", d),
        None => ("training", train_set.base()),
    };
    let sigmoid = scores(&model, calib_data)
        .and_then(|f| CalibrationSet::new(f, calib_data.labels().to_vec()))
        .and_then(|cs| fit_platt(&cs, &cfg.newton))
        .map_err(|e| e.in_stage("calibration"))?;
    let calibration_seconds = t.elapsed().as_secs_f64();
    if !sigmoid.converged {
        warnings.push(format!(
            "sigmoid fit stopped after {} Newton iterations without meeting the gradient tolerance",
            sigmoid.newton_iterations
        ));
    }

    // evaluation on the test set
    let t = Instant::now();
    let (uncalibrated, mut calibrated) =
        evaluate_test(&model, &sigmoid, &test_set, cfg.threshold_step).map_err(|e| e.in_stage("evaluation"))?;
    calibrated.fitted_on = fitted_on.into();
    let evaluation_seconds = t.elapsed().as_secs_f64();
    if uncalibrated.precision_undefined {
        warnings.push("uncalibrated model predicts no actives on the test set; precision set to 0".into());
    }
    if !calibrated.threshold.feasible {
        warnings.push(format!(
            "no threshold reaches F1 > 0.5; reporting the best-F1 threshold {:.2}",
            calibrated.threshold.threshold
        ));
    }

    let mut doc = ModelDocument::new(&model, scaling);
    doc.calibration = Some(sigmoid);
    doc.threshold = Some(calibrated.threshold.threshold);

    let solver_work = SolverWork {
        hyperopt_hessian_applications: cv.hessian_applications,
        training_hessian_applications: model.diagnostics.hessian_applications,
        total_hessian_applications: cv.hessian_applications + model.diagnostics.hessian_applications,
    };

    let report = PipelineReport {
        tool: ToolInfo::current(),
        config: cfg.clone(),
        datasets,
        hyperopt: HyperOptSummary {
            best_c: cv.best_c,
            best_exponent: cv.best_exponent,
            folds: cfg.folds,
            training_runs: cv.training_runs,
            grid: cv
                .per_c
                .iter()
                .map(|p| GridPointSummary {
                    exponent: p.exponent,
                    c: p.c,
                    accumulated_score: p.accumulated_score,
                    mean_score: p.mean_score,
                    all_folds_converged: p.folds.iter().all(|f| f.converged),
                })
                .collect(),
        },
        model: ModelSummary {
            loss: model.loss,
            penalty_c: model.penalty_c,
            gamma: model.gamma,
            bias: model.bias(),
            n_features: model.n_features(),
            augmented_rank,
            diagnostics: model.diagnostics.clone(),
        },
        uncalibrated,
        calibrated,
        solver_work,
        warnings,
        timing: Timing {
            load_seconds: prep_seconds,
            hyperopt_seconds,
            training_seconds,
            calibration_seconds,
            evaluation_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    };
    Ok(PipelineOutput { report, model: doc })
}

/// Uncalibrated (sign rule, AUC over raw scores) and calibrated (balanced
/// threshold, AUC over probabilities) evaluations on `test`.
pub fn evaluate_test(
    model: &crate::svm::SvmModel,
    sigmoid: &SigmoidCalibration,
    test: &Dataset,
    threshold_step: f64,
) -> Result<(EvaluationReport, CalibratedSection)> {
    let raw = scores(model, test)?;
    let sign_labels: Vec<_> = raw.iter().map(|&f| label_from_score(f)).collect();
    let uncalibrated = evaluate(&sign_labels, &raw, test.labels())?;

    let probs: Vec<f64> = raw
        .iter()
        .map(|&f| calibrate_score(sigmoid, f))
        .collect::<Result<_>>()?;
    let brier_score = brier(&probs, test.labels())?;
    let threshold = select_threshold(&probs, test.labels(), threshold_step)?;
    let mut evaluation = evaluate(&apply_threshold(&probs, threshold.threshold), &probs, test.labels())?;
    evaluation.brier = Some(brier_score);
    evaluation.threshold = Some(threshold.threshold);
    Ok((
        uncalibrated,
        CalibratedSection {
            fitted_on: String::new(),
            sigmoid: sigmoid.clone(),
            brier: brier_score,
            threshold,
            evaluation,
        },
    ))
}
