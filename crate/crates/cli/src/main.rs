//! `ligand-svm` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod args;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use ligand_svm::calibration::{fit_platt, CalibrationSet, NewtonConfig};
use ligand_svm::data::{
    generate_synthetic, load_dataset, save_dataset, stratified_split, CsvOptions, DataFormat, Dataset, SplitSpec,
};
use ligand_svm::metrics::{evaluate, EvaluationReport};
use ligand_svm::model_select::{grid_search_c, GridSpec};
use ligand_svm::persist::{predict, FeatureScaling, ModelDocument};
use ligand_svm::pipeline::{evaluate_test, run_pipeline, CalibratedSection, InputSpec, PipelineConfig, ReportFormat};
use ligand_svm::seed::derive_seed;
use ligand_svm::svm::{label_from_score, scores, train};
use ligand_svm::{augment, Error, ErrorKind, Label, Result};
use serde::Serialize;

use args::*;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Split(a) => split(a),
        Command::Train(a) => train_cmd(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Synth(a) => synth(a),
    }
}

fn extension(format: DataFormat) -> &'static str {
    match format {
        DataFormat::Svmlight => "svm",
        DataFormat::Csv => "csv",
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_error(Path::new("<stdout>"), e)),
    }
}

fn scaled(doc: &ModelDocument, d: Dataset) -> Result<Dataset> {
    match &doc.scaling {
        Some(s) => s.apply(&d),
        None => Ok(d),
    }
}

fn split(a: SplitArgs) -> Result<()> {
    let format = a.data.format.into();
    let csv = a.data.csv();
    let d = load_dataset(&a.input, format, &csv)?;
    let [tr, ca, te] = a.fractions;
    let spec = SplitSpec::new(tr, ca, te, derive_seed(a.seed, "split"))?;
    let (train, calibration, test) = stratified_split(&d, &spec)?;
    std::fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    for part in [&train, &calibration, &test] {
        let path = a.out.join(format!("{}.{}", part.name(), extension(format)));
        save_dataset(part, &path, format, &csv)?;
        let (pos, neg) = part.class_counts();
        println!("{}\t{pos}\t{neg}", path.display());
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let d = load_dataset(&a.train, a.data.format.into(), &a.data.csv())?;
    let scaling = a.model.scale.then(|| FeatureScaling::fit(&d));
    let d = match &scaling {
        Some(s) => s.apply(&d)?,
        None => d,
    };
    let data = augment(d, a.model.gamma)?;
    let grid = GridSpec {
        exponents: a.model.c_exponents.clone().collect(),
        folds: a.model.folds,
        seed: derive_seed(a.seed, "cv"),
    };
    let solver = a.model.solver.config();
    let loss = a.model.loss.into();
    let cv = grid_search_c(&data, loss, &grid, &solver)?;
    let model = train(&data, loss, cv.best_c, &solver)?;
    ModelDocument::new(&model, scaling).save(&a.out)?;
    println!(
        "C_BE = 2^{} ({}), {} solver iterations, converged: {}",
        cv.best_exponent, cv.best_c, model.diagnostics.iterations, model.diagnostics.converged
    );
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let mut doc = ModelDocument::load(&a.model)?;
    let d = load_dataset(&a.data, a.data_format.format.into(), &a.data_format.csv())?;
    let d = scaled(&doc, d)?;
    let cs = CalibrationSet::new(scores(&doc.model(), &d)?, d.labels().to_vec())?;
    let sigmoid = fit_platt(&cs, &NewtonConfig::default())?;
    println!(
        "A = {}, B = {}, {} Newton iterations, converged: {}",
        sigmoid.a, sigmoid.b, sigmoid.newton_iterations, sigmoid.converged
    );
    doc.calibration = Some(sigmoid);
    doc.threshold = None;
    doc.save(a.out.as_ref().unwrap_or(&a.model))
}

fn label_str(l: Label) -> &'static str {
    match l {
        Label::Positive => "1",
        Label::Negative => "-1",
    }
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let doc = ModelDocument::load(&a.model)?;
    let d = load_dataset(&a.data, a.data_format.format.into(), &a.data_format.csv())?;
    let preds = predict(&doc, &d, a.threshold)?;
    let mut out = String::from("score\tprobability\tlabel\n");
    for p in &preds {
        let prob = p.probability.map_or_else(|| "-".to_string(), |x| x.to_string());
        let _ = writeln!(out, "{}\t{}\t{}", p.score, prob, label_str(p.label));
    }
    write_text(a.out.as_deref(), &out)
}

#[derive(Serialize)]
struct EvaluateReport {
    uncalibrated: EvaluationReport,
    calibrated: Option<CalibratedSection>,
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let mut doc = ModelDocument::load(&a.model)?;
    let d = load_dataset(&a.data, a.data_format.format.into(), &a.data_format.csv())?;
    let d = scaled(&doc, d)?;
    let model = doc.model();
    let report = match &doc.calibration {
        Some(sigmoid) => {
            let (uncalibrated, mut calibrated) = evaluate_test(&model, sigmoid, &d, a.threshold_step)?;
            calibrated.fitted_on = "model".into();
            EvaluateReport {
                uncalibrated,
                calibrated: Some(calibrated),
            }
        }
        None => {
            let raw = scores(&model, &d)?;
            let labels: Vec<Label> = raw.iter().map(|&f| label_from_score(f)).collect();
            EvaluateReport {
                uncalibrated: evaluate(&labels, &raw, d.labels())?,
                calibrated: None,
            }
        }
    };
    if let (Some(out), Some(c)) = (&a.out, &report.calibrated) {
        doc.threshold = Some(c.threshold.threshold);
        doc.save(out)?;
    }
    let text = match a.report {
        ReportArg::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        ReportArg::Text => evaluation_text(&report),
    };
    write_text(None, &text)
}

fn evaluation_text(r: &EvaluateReport) -> String {
    let mut s = String::new();
    let u = &r.uncalibrated;
    let _ = writeln!(
        s,
        "{:<13} {:>6} {:>9} {:>9} {:>6} {:>6} {:>8}",
        "model", "Thr.", "Pre. [%]", "Sen. [%]", "F1", "AUC", "Brier"
    );
    let _ = writeln!(
        s,
        "{:<13} {:>6} {:>9.2} {:>9.2} {:>6.2} {:>6.2} {:>8}",
        "uncalibrated",
        "-",
        100.0 * u.precision,
        100.0 * u.sensitivity,
        u.f1,
        u.auc,
        "-"
    );
    if let Some(c) = &r.calibrated {
        let e = &c.evaluation;
        let _ = writeln!(
            s,
            "{:<13} {:>6.2} {:>9.2} {:>9.2} {:>6.2} {:>6.2} {:>8.4}",
            "calibrated",
            c.threshold.threshold,
            100.0 * e.precision,
            100.0 * e.sensitivity,
            e.f1,
            e.auc,
            c.brier
        );
        if !c.threshold.feasible {
            let _ = writeln!(s, "warning: no threshold reaches F1 > 0.5");
        }
    }
    s
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let inputs = match (a.input, a.train, a.test) {
        (Some(path), _, _) => InputSpec::Single {
            path,
            fractions: a.fractions,
        },
        (None, Some(train), Some(test)) => InputSpec::Files {
            train,
            calibration: a.calibration,
            test,
        },
        _ => return Err(Error::Usage("give --input, or --train and --test".into())),
    };
    let mut cfg = PipelineConfig::new(inputs);
    cfg.format = a.data.format.into();
    cfg.csv = a.data.csv();
    cfg.loss = a.model.loss.into();
    cfg.c_exponents = a.model.c_exponents.collect();
    cfg.folds = a.model.folds;
    cfg.solver = a.model.solver.config();
    cfg.gamma = a.model.gamma;
    cfg.scale_features = a.model.scale;
    cfg.threshold_step = a.threshold_step;
    cfg.calibrate_on_train = a.calibrate_on_train;
    cfg.seed = a.seed;
    cfg.output = a.out;
    cfg.report_format = a.report.into();
    let out = run_pipeline(&cfg)?;
    for w in &out.report.warnings {
        eprintln!("warning: {w}");
    }
    let mut text = out.report.render(cfg.report_format);
    if cfg.report_format == ReportFormat::Json {
        text.push('\n');
    }
    write_text(None, &text)
}

fn synth(a: SynthArgs) -> Result<()> {
    let d = generate_synthetic(a.samples, a.features, a.active_fraction, a.separation, a.seed)?;
    let csv = CsvOptions {
        has_header: a.header,
        ..CsvOptions::default()
    };
    let out: PathBuf = a.out;
    save_dataset(&d, &out, a.format.into(), &csv)?;
    let (pos, neg) = d.class_counts();
    println!("{}\t{pos}\t{neg}", out.display());
    Ok(())
}
