//! Binary-classification and probabilistic quality metrics. `+1` (active)
//! is the positive class throughout.

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(predicted: &[Label], actual: &[Label]) -> Result<ConfusionCounts> {
    if predicted.len() != actual.len() {
        return Err(Error::InvalidData(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InvalidData("no samples to evaluate".into()));
    }
    let mut c = ConfusionCounts::default();
    for (p, a) in predicted.iter().zip(actual) {
        match (p.is_positive(), a.is_positive()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(precision, sensitivity, f1)`; an empty denominator yields 0.
pub fn precision_sensitivity_f1(c: &ConfusionCounts) -> (f64, f64, f64) {
    let precision = ratio(c.tp, c.tp + c.fp);
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + sensitivity == 0.0 {
        0.0
    } else {
        2.0 * precision * sensitivity / (precision + sensitivity)
    };
    (precision, sensitivity, f1)
}

fn class_sizes(actual: &[Label]) -> (usize, usize) {
    let pos = actual.iter().filter(|l| l.is_positive()).count();
    (pos, actual.len() - pos)
}

/// Area under the ROC curve as the Mann–Whitney statistic with midranks
/// for tied scores.
pub fn auc(scores: &[f64], actual: &[Label]) -> Result<f64> {
    if scores.len() != actual.len() {
        return Err(Error::InvalidData(format!(
            "{} scores for {} labels",
            scores.len(),
            actual.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidData("NaN score".into()));
    }
    let (n_pos, n_neg) = class_sizes(actual);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Ranks are 1-based; a tie group spanning positions i..j gets (i+j+1)/2.
    // Summing twice the rank keeps everything in integers.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| actual[k].is_positive()).count() as u128;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j;
    }
    let np = n_pos as u128;
    // 2U = 2R − n₊(n₊+1)
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Mean squared difference between probability and outcome.
pub fn brier(probabilities: &[f64], actual: &[Label]) -> Result<f64> {
    if probabilities.len() != actual.len() {
        return Err(Error::InvalidData(format!(
            "{} probabilities for {} labels",
            probabilities.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InvalidData("no samples to evaluate".into()));
    }
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidData(format!("probability {p} outside [0, 1]")));
    }
    let sum: f64 = probabilities
        .iter()
        .zip(actual)
        .map(|(p, a)| {
            let o = if a.is_positive() { 1.0 } else { 0.0 };
            (p - o) * (p - o)
        })
        .sum();
    Ok(sum / actual.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub sensitivity: f64,
    pub f1: f64,
    pub auc: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub brier: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold: Option<f64>,
    /// Set when no sample was predicted positive, so precision fell back to 0.
    pub precision_undefined: bool,
}

/// Evaluates hard predictions, with AUC taken over the continuous `scores`.
pub fn evaluate(predicted: &[Label], scores: &[f64], actual: &[Label]) -> Result<EvaluationReport> {
    let counts = confusion(predicted, actual)?;
    let (precision, sensitivity, f1) = precision_sensitivity_f1(&counts);
    Ok(EvaluationReport {
        counts,
        precision,
        sensitivity,
        f1,
        auc: auc(scores, actual)?,
        brier: None,
        threshold: None,
        precision_undefined: counts.tp + counts.fp == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Negative as N, Positive as P};

    #[test]
    fn confusion_cases() {
        let c = confusion(&[P, N], &[P, N]).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (1, 1, 0, 0));
        let c = confusion(&[N, P], &[P, N]).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        let c = confusion(&[P, P, N], &[P, N, N]).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (1, 1, 1, 0));
        assert_eq!(c.total(), 3);
        assert!(confusion(&[P], &[P, N]).is_err());
    }

    #[test]
    fn rates() {
        let c = ConfusionCounts {
            tp: 2,
            fp: 1,
            tn: 0,
            fn_: 1,
        };
        let (p, s, f) = precision_sensitivity_f1(&c);
        assert_eq!((p, s), (2.0 / 3.0, 2.0 / 3.0));
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(precision_sensitivity_f1(&ConfusionCounts::default()), (0.0, 0.0, 0.0));
        let c = ConfusionCounts {
            tp: 5,
            fp: 0,
            tn: 3,
            fn_: 0,
        };
        assert_eq!(precision_sensitivity_f1(&c), (1.0, 1.0, 1.0));
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[N, N, P, P]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 5], &[N, P, P, N, P]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[N, P, N, P]).unwrap(), 1.0);
        // one inverted pair out of four
        assert_eq!(auc(&[0.1, 0.4, 0.45, 0.8], &[N, P, N, P]).unwrap(), 0.75);
        // a tied cross-class pair counts one half
        assert_eq!(auc(&[0.1, 0.4, 0.4, 0.8], &[N, P, N, P]).unwrap(), 0.875);
        assert!(matches!(auc(&[0.1, 0.2], &[P, P]), Err(Error::SingleClass)));
    }

    #[test]
    fn brier_cases() {
        assert_eq!(brier(&[1.0, 0.0], &[P, N]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5; 4], &[P, N, N, P]).unwrap(), 0.25);
        assert!((brier(&[0.8, 0.3], &[P, N]).unwrap() - 0.065).abs() < 1e-15);
        assert!(brier(&[1.2], &[P]).is_err());
    }
}
