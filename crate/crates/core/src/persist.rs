//! Versioned JSON model document and per-sample prediction.
//!
//! ```json
//! {
//!   "format": "ligand-svm-model",
//!   "version": 1,
//!   "loss": "l1",
//!   "penalty_c": 0.015625,
//!   "gamma": 1.0,
//!   "w_hat": [0.12, -0.03, 0.41],
//!   "scaling": null,
//!   "calibration": { "a": -2.1, "b": 0.3, ... },
//!   "threshold": 0.53,
//!   "diagnostics": { ... }
//! }
//! ```
//!
//! `w_hat` is the augmented normal vector (last entry is the bias weight).
//! `scaling`, `calibration` and `threshold` may be `null`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_score, SigmoidCalibration};
use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::svm::{label_from_score, raw_score, LossVariant, SvmModel, TrainingDiagnostics};

pub const MODEL_FORMAT: &str = "ligand-svm-model";
pub const MODEL_VERSION: u32 = 1;

/// Per-feature standardization `(x − mean) / scale`, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaling {
    /// Constant columns get scale 1.
    pub fn fit(d: &Dataset) -> Self {
        let n = d.n_features();
        let m = d.n_samples() as f64;
        let mut mean = vec![0.0; n];
        for r in d.rows() {
            mean.iter_mut().zip(r).for_each(|(s, x)| *s += x);
        }
        mean.iter_mut().for_each(|s| *s /= m);
        let mut var = vec![0.0; n];
        for r in d.rows() {
            for j in 0..n {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / m).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        if d.n_features() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: d.n_features(),
            });
        }
        Ok(d.map_features(|j, x| (x - self.mean[j]) / self.scale[j]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub loss: LossVariant,
    pub penalty_c: f64,
    pub gamma: f64,
    pub w_hat: Vec<f64>,
    pub scaling: Option<FeatureScaling>,
    pub calibration: Option<SigmoidCalibration>,
    pub threshold: Option<f64>,
    pub diagnostics: TrainingDiagnostics,
}

impl ModelDocument {
    pub fn new(model: &SvmModel, scaling: Option<FeatureScaling>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            loss: model.loss,
            penalty_c: model.penalty_c,
            gamma: model.gamma,
            w_hat: model.w_hat.clone(),
            scaling,
            calibration: None,
            threshold: None,
            diagnostics: model.diagnostics.clone(),
        }
    }

    pub fn model(&self) -> SvmModel {
        SvmModel {
            w_hat: self.w_hat.clone(),
            gamma: self.gamma,
            loss: self.loss,
            penalty_c: self.penalty_c,
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.w_hat.len() - 1
    }

    fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Model(format!("unknown format {:?}", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Model(format!("unsupported version {}", self.version)));
        }
        if self.w_hat.len() < 2 || self.w_hat.iter().any(|w| !w.is_finite()) {
            return Err(Error::Model("w_hat must hold at least 2 finite entries".into()));
        }
        if !(self.gamma > 0.0 && self.penalty_c > 0.0) {
            return Err(Error::Model("gamma and penalty_c must be positive".into()));
        }
        if let Some(s) = &self.scaling {
            if s.mean.len() != self.n_features() || s.scale.len() != self.n_features() {
                return Err(Error::Model("scaling length does not match w_hat".into()));
            }
        }
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Model(format!("threshold {t} outside [0, 1]")));
            }
            if self.calibration.is_none() {
                return Err(Error::Model("threshold stored without calibration".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                Error::NotFound {
                    what: "model".into(),
                    path: path.to_path_buf(),
                }
            } else {
                Error::Io {
                    path: path.to_path_buf(),
                    source,
                }
            }
        })?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub probability: Option<f64>,
    pub label: Label,
}

/// Scores every row. The label comes from `p > threshold` when a threshold
/// is given or stored, otherwise from the sign of the raw score. Passing a
/// threshold to an uncalibrated model is an error.
pub fn predict(doc: &ModelDocument, d: &Dataset, threshold: Option<f64>) -> Result<Vec<Prediction>> {
    if d.n_features() != doc.n_features() {
        return Err(Error::DimensionMismatch {
            expected: doc.n_features(),
            found: d.n_features(),
        });
    }
    if threshold.is_some() && doc.calibration.is_none() {
        return Err(Error::Usage("a threshold requires a calibrated model".into()));
    }
    if let Some(t) = threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!("threshold {t} outside [0, 1]")));
        }
    }
    let scaled;
    let data = match &doc.scaling {
        Some(s) => {
            scaled = s.apply(d)?;
            &scaled
        }
        None => d,
    };
    let model = doc.model();
    let threshold = threshold.or(doc.threshold);
    data.rows()
        .map(|row| {
            let score = raw_score(&model, row)?;
            let probability = doc
                .calibration
                .as_ref()
                .map(|c| calibrate_score(c, score))
                .transpose()?;
            let label = match (probability, threshold) {
                (Some(p), Some(t)) => {
                    if p > t {
                        Label::Positive
                    } else {
                        Label::Negative
                    }
                }
                _ => label_from_score(score),
            };
            Ok(Prediction {
                score,
                probability,
                label,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> ModelDocument {
        ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            loss: LossVariant::L2,
            penalty_c: 0.25,
            gamma: 1.0,
            w_hat: vec![1.0, -0.5, 0.1],
            scaling: None,
            calibration: None,
            threshold: None,
            diagnostics: TrainingDiagnostics {
                iterations: 3,
                converged: true,
                initial_projected_gradient_norm: 1.0,
                final_projected_gradient_norm: 0.01,
                dual_objective: -0.3,
                hessian_applications: 12,
                expansion_step_length: 0.1,
                support_vectors: 4,
            },
        }
    }

    fn data() -> Dataset {
        Dataset::new(
            "p",
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.2, 0.1]],
            vec![Label::Positive, Label::Negative, Label::Positive],
        )
        .unwrap()
    }

    #[test]
    fn uncalibrated_prediction_uses_sign() {
        let p = predict(&doc(), &data(), None).unwrap();
        assert_eq!(p[0].score, 1.1);
        assert_eq!(p[0].probability, None);
        assert_eq!(p[0].label, Label::Positive);
        assert_eq!(p[1].label, Label::Negative);
        assert!(predict(&doc(), &data(), Some(0.5)).is_err());
    }

    #[test]
    fn threshold_labels_follow_probability() {
        let mut d = doc();
        d.calibration = Some(SigmoidCalibration {
            a: -2.0,
            b: 0.0,
            final_cross_entropy: 0.0,
            newton_iterations: 1,
            converged: true,
        });
        let p = predict(&d, &data(), Some(0.53)).unwrap();
        for x in &p {
            let prob = x.probability.unwrap();
            assert_eq!(x.label == Label::Positive, prob > 0.53);
        }
        d.threshold = Some(0.99);
        let p = predict(&d, &data(), None).unwrap();
        assert!(p.iter().all(|x| x.label == Label::Negative));
    }

    #[test]
    fn dimension_mismatch_names_both_sizes() {
        let bad = Dataset::new("b", vec![vec![1.0]], vec![Label::Positive]).unwrap();
        let e = predict(&doc(), &bad, None).unwrap_err();
        assert_eq!(e.to_string(), "dimension mismatch: expected 2 features, found 1");
    }

    #[test]
    fn document_validation() {
        let mut d = doc();
        assert_eq!(ModelDocument::from_json(&d.to_json()).unwrap(), d);
        d.version = 9;
        assert!(ModelDocument::from_json(&d.to_json()).is_err());
        let mut d = doc();
        d.threshold = Some(0.5);
        assert!(ModelDocument::from_json(&d.to_json()).is_err());
        assert!(ModelDocument::from_json("{}").is_err());
    }

    #[test]
    fn scaling_standardizes_columns() {
        let d = Dataset::new(
            "s",
            vec![vec![1.0, 5.0], vec![3.0, 5.0]],
            vec![Label::Positive, Label::Negative],
        )
        .unwrap();
        let s = FeatureScaling::fit(&d);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        let z = s.apply(&d).unwrap();
        assert_eq!(z.row(0), &[-1.0, 0.0]);
    }
}
