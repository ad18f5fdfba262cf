//! Penalty selection by grid search with stratified k-fold cross-validation,
//! and the probability threshold that balances precision against
//! sensitivity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_kfold, AugmentedDataset, Label};
use crate::error::{Error, Result};
use crate::metrics::{confusion, precision_sensitivity_f1, ConfusionCounts};
use crate::qp::SolverConfig;
use crate::svm::{label_from_score, scores, train, LossVariant};

/// Penalties `C = 2^p` for every `p` in `exponents`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub exponents: Vec<i32>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            exponents: (-7..=7).collect(),
            folds: 3,
            seed: 0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.exponents.is_empty() {
            return Err(Error::InvalidParameter("empty penalty grid".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidParameter(format!(
                "at least 2 folds required, got {}",
                self.folds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub precision: f64,
    pub sensitivity: f64,
    pub f1: f64,
    /// No validation sample was predicted positive; precision was set to 0.
    pub precision_undefined: bool,
    pub converged: bool,
    pub iterations: usize,
    pub hessian_applications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub exponent: i32,
    pub c: f64,
    /// Sum over folds of precision + sensitivity.
    pub accumulated_score: f64,
    pub mean_score: f64,
    pub folds: Vec<FoldMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub per_c: Vec<CvPoint>,
    pub best_c: f64,
    pub best_exponent: i32,
    pub training_runs: usize,
    pub hessian_applications: usize,
}

fn fold_metrics(
    d: &AugmentedDataset,
    train_idx: &[usize],
    val_idx: &[usize],
    loss: LossVariant,
    c: f64,
    cfg: &SolverConfig,
) -> Result<FoldMetrics> {
    let train_set = d.subset(train_idx, "cv-train");
    let val = d.base().subset(val_idx, "cv-validation");
    let model = train(&train_set, loss, c, cfg)?;
    let predicted: Vec<Label> = scores(&model, &val)?.into_iter().map(label_from_score).collect();
    let counts = confusion(&predicted, val.labels())?;
    let (precision, sensitivity, f1) = precision_sensitivity_f1(&counts);
    Ok(FoldMetrics {
        precision,
        sensitivity,
        f1,
        precision_undefined: counts.tp + counts.fp == 0,
        converged: model.diagnostics.converged,
        iterations: model.diagnostics.iterations,
        hessian_applications: model.diagnostics.hessian_applications,
    })
}

/// Trains `|exponents| × k` models; the best penalty maximizes the summed
/// per-fold precision + sensitivity, ties going to the smaller `C`.
pub fn grid_search_c(d: &AugmentedDataset, loss: LossVariant, grid: &GridSpec, cfg: &SolverConfig) -> Result<CvResult> {
    grid.validate()?;
    let folds = stratified_kfold(d.base(), grid.folds, grid.seed)?;
    let tasks: Vec<(usize, usize)> = (0..grid.exponents.len())
        .flat_map(|e| (0..folds.len()).map(move |f| (e, f)))
        .collect();
    let results: Vec<FoldMetrics> = tasks
        .par_iter()
        .map(|&(e, f)| {
            let c = 2f64.powi(grid.exponents[e]);
            fold_metrics(d, &folds[f].train, &folds[f].validation, loss, c, cfg)
        })
        .collect::<Result<_>>()?;

    let k = folds.len();
    let per_c: Vec<CvPoint> = grid
        .exponents
        .iter()
        .zip(results.chunks_exact(k))
        .map(|(&exponent, fm)| {
            let accumulated_score: f64 = fm.iter().map(|m| m.precision + m.sensitivity).sum();
            CvPoint {
                exponent,
                c: 2f64.powi(exponent),
                accumulated_score,
                mean_score: accumulated_score / k as f64,
                folds: fm.to_vec(),
            }
        })
        .collect();

    let best = per_c
        .iter()
        .reduce(|best, p| {
            let better = p.accumulated_score > best.accumulated_score
                || (p.accumulated_score == best.accumulated_score && p.c < best.c);
            if better {
                p
            } else {
                best
            }
        })
        .expect("grid is non-empty");

    Ok(CvResult {
        best_c: best.c,
        best_exponent: best.exponent,
        training_runs: results.len(),
        hessian_applications: results.iter().map(|r| r.hessian_applications).sum(),
        per_c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub precision: f64,
    pub sensitivity: f64,
    pub f1: f64,
    /// Whether the threshold reaches F1 > 0.5.
    pub feasible: bool,
    pub counts: ConfusionCounts,
}

/// Minimum F1 a balanced threshold must exceed.
pub const MIN_F1: f64 = 0.5;

/// Thresholds `step, 2·step, …` strictly inside `(0, 1)`.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "threshold step must lie in (0, 0.5], got {step}"
        )));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() < 1e-9 {
        // exact decimal thresholds such as 0.53 rather than 53 × 0.01
        let n = n as usize;
        return Ok((1..n).map(|i| i as f64 / n as f64).collect());
    }
    Ok((1..).map(|i| i as f64 * step).take_while(|&t| t < 1.0).collect())
}

/// Labels `+1` exactly when `p > threshold`.
pub fn apply_threshold(probabilities: &[f64], threshold: f64) -> Vec<Label> {
    probabilities
        .iter()
        .map(|&p| {
            if p > threshold {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect()
}

const TIE_EPS: f64 = 1e-12;

/// Grid search for the threshold minimizing `|precision − sensitivity|`
/// subject to `F1 > 0.5`. Ties prefer larger F1, then the smaller
/// threshold. Without a feasible threshold the best-F1 one is returned,
/// flagged infeasible.
pub fn select_threshold(probabilities: &[f64], labels: &[Label], step: f64) -> Result<ThresholdResult> {
    if probabilities.len() != labels.len() {
        return Err(Error::InvalidData(format!(
            "{} probabilities for {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|l| l.is_positive()).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let candidates: Vec<ThresholdResult> = threshold_grid(step)?
        .into_iter()
        .map(|thr| {
            let counts = confusion(&apply_threshold(probabilities, thr), labels)?;
            let (precision, sensitivity, f1) = precision_sensitivity_f1(&counts);
            Ok(ThresholdResult {
                threshold: thr,
                precision,
                sensitivity,
                f1,
                feasible: f1 > MIN_F1,
                counts,
            })
        })
        .collect::<Result<_>>()?;

    let gap = |r: &ThresholdResult| (r.precision - r.sensitivity).abs();
    let balanced = candidates.iter().filter(|r| r.feasible).reduce(|best, r| {
        let (g, gb) = (gap(r), gap(best));
        if g < gb - TIE_EPS || ((g - gb).abs() <= TIE_EPS && r.f1 > best.f1 + TIE_EPS) {
            r
        } else {
            best
        }
    });
    let chosen = match balanced {
        Some(r) => r,
        None => candidates
            .iter()
            .reduce(|best, r| if r.f1 > best.f1 + TIE_EPS { r } else { best })
            .expect("threshold grid is non-empty"),
    };
    Ok(chosen.clone())
}
