//! Relaxed-bias linear SVM.
//!
//! The bias is folded into an extra augmented coordinate, so the dual has
//! only bound constraints:
//!
//! * ℓ1 (hinge) loss: `min ½αᵀYKYα − eᵀα` s.t. `0 ≤ α ≤ C`,
//! * ℓ2 (squared hinge) loss: `min ½αᵀ(YKY + C⁻¹I)α − eᵀα` s.t. `0 ≤ α`,
//!
//! with `K = X̂ᵀX̂` never assembled. The primal normal vector is recovered as
//! `ŵ = X̂Yα`.

use serde::{Deserialize, Serialize};

use crate::data::{dot, AugmentedDataset, Dataset, Label};
use crate::error::{Error, Result};
use crate::qp::{mprgp_solve, LinearOperator, QpProblem, QpSolution, SolverConfig};

/// Every dual variable starts at this fraction of `C`.
pub const INITIAL_GUESS_FACTOR: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    /// Hinge loss, `p = 1`.
    L1,
    /// Squared hinge loss, `p = 2`.
    L2,
}

impl LossVariant {
    pub fn exponent(self) -> i32 {
        match self {
            LossVariant::L1 => 1,
            LossVariant::L2 => 2,
        }
    }
}

impl std::fmt::Display for LossVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            LossVariant::L1 => "l1",
            LossVariant::L2 => "l2",
        })
    }
}

impl std::str::FromStr for LossVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" | "L1" => Ok(LossVariant::L1),
            "l2" | "L2" => Ok(LossVariant::L2),
            _ => Err(Error::Usage(format!("unknown loss {s:?}, expected l1 or l2"))),
        }
    }
}

/// `v ↦ YX̂ᵀX̂Yv + shift·v`, applied as a chain of matrix-vector products.
#[derive(Debug, Clone, Copy)]
pub struct DualHessian<'a> {
    data: &'a AugmentedDataset,
    shift: f64,
}

impl<'a> DualHessian<'a> {
    pub fn new(data: &'a AugmentedDataset, loss: LossVariant, c: f64) -> Self {
        let shift = match loss {
            LossVariant::L1 => 0.0,
            LossVariant::L2 => 1.0 / c,
        };
        Self { data, shift }
    }
}

impl LinearOperator for DualHessian<'_> {
    fn dim(&self) -> usize {
        self.data.n_samples()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let labels = self.data.labels();
        let yv: Vec<f64> = v.iter().zip(labels).map(|(vi, y)| y.sign() * vi).collect();
        let mut w = vec![0.0; self.data.dim()];
        self.data.combine_rows(&yv, &mut w);
        for (i, o) in out.iter_mut().enumerate() {
            *o = labels[i].sign() * self.data.dot_row(i, &w) + self.shift * v[i];
        }
    }
}

fn check_penalty(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("penalty C must be positive, got {c}")))
    }
}

/// Builds the dual QP for `loss` at penalty `c`.
pub fn assemble_dual(d: &AugmentedDataset, loss: LossVariant, c: f64) -> Result<QpProblem<DualHessian<'_>>> {
    check_penalty(c)?;
    if !d.base().has_both_classes() {
        return Err(Error::SingleClass);
    }
    let m = d.n_samples();
    let upper = match loss {
        LossVariant::L1 => Some(vec![c; m]),
        LossVariant::L2 => None,
    };
    QpProblem::new(DualHessian::new(d, loss, c), vec![-1.0; m], vec![0.0; m], upper)
}

/// Summary of the dual solve kept with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub initial_projected_gradient_norm: f64,
    pub final_projected_gradient_norm: f64,
    pub dual_objective: f64,
    pub hessian_applications: usize,
    pub expansion_step_length: f64,
    pub support_vectors: usize,
}

impl TrainingDiagnostics {
    fn from_solution(s: &QpSolution) -> Self {
        Self {
            iterations: s.iterations,
            converged: s.converged,
            initial_projected_gradient_norm: s.initial_projected_gradient_norm,
            final_projected_gradient_norm: s.final_projected_gradient_norm,
            dual_objective: s.objective,
            hessian_applications: s.hessian_applications,
            expansion_step_length: s.expansion_step_length,
            support_vectors: s.alpha.iter().filter(|&&a| a > 0.0).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Augmented normal vector; the last entry is the bias weight `B`.
    pub w_hat: Vec<f64>,
    pub gamma: f64,
    pub loss: LossVariant,
    pub penalty_c: f64,
    pub diagnostics: TrainingDiagnostics,
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.w_hat.len() - 1
    }

    /// Implied hyperplane offset `b = B·γ`.
    pub fn bias(&self) -> f64 {
        self.w_hat[self.n_features()] * self.gamma
    }

    pub fn weights(&self) -> &[f64] {
        &self.w_hat[..self.n_features()]
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found == self.n_features() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found,
            })
        }
    }
}

/// A trained model together with the dual multipliers it came from.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: SvmModel,
    pub solution: QpSolution,
}

/// Trains from the initial guess `0.99·C·e` (both losses); a solve that
/// stops on the iteration cap is flagged in the diagnostics, not an error.
pub fn train(d: &AugmentedDataset, loss: LossVariant, c: f64, cfg: &SolverConfig) -> Result<SvmModel> {
    train_with_dual(d, loss, c, cfg).map(|t| t.model)
}

pub fn train_with_dual(d: &AugmentedDataset, loss: LossVariant, c: f64, cfg: &SolverConfig) -> Result<TrainOutput> {
    let problem = assemble_dual(d, loss, c)?;
    let x0 = vec![INITIAL_GUESS_FACTOR * c; d.n_samples()];
    let solution = mprgp_solve(&problem, &x0, cfg)?;
    let model = model_from_dual(
        d,
        loss,
        c,
        &solution.alpha,
        TrainingDiagnostics::from_solution(&solution),
    );
    Ok(TrainOutput { model, solution })
}

fn model_from_dual(
    d: &AugmentedDataset,
    loss: LossVariant,
    c: f64,
    alpha: &[f64],
    diagnostics: TrainingDiagnostics,
) -> SvmModel {
    SvmModel {
        w_hat: reconstruct_primal(d, alpha),
        gamma: d.gamma(),
        loss,
        penalty_c: c,
        diagnostics,
    }
}

/// `ŵ = X̂Yα`
pub fn reconstruct_primal(d: &AugmentedDataset, alpha: &[f64]) -> Vec<f64> {
    let ya: Vec<f64> = alpha.iter().zip(d.labels()).map(|(a, y)| a * y.sign()).collect();
    let mut w = vec![0.0; d.dim()];
    d.combine_rows(&ya, &mut w);
    w
}

/// `⟨ŵ, (x; γ)⟩`
pub fn raw_score(model: &SvmModel, x: &[f64]) -> Result<f64> {
    model.check_dim(x.len())?;
    Ok(dot(model.weights(), x) + model.bias())
}

/// Sign of the raw score; a score of exactly zero maps to `Positive`.
pub fn predict_label(model: &SvmModel, x: &[f64]) -> Result<Label> {
    raw_score(model, x).map(label_from_score)
}

pub fn label_from_score(score: f64) -> Label {
    if score >= 0.0 {
        Label::Positive
    } else {
        Label::Negative
    }
}

pub fn scores(model: &SvmModel, d: &Dataset) -> Result<Vec<f64>> {
    model.check_dim(d.n_features())?;
    d.rows().map(|r| raw_score(model, r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HingeStats {
    /// `ξᵢ = max(0, 1 − yᵢfᵢ)`
    pub xi: Vec<f64>,
    /// `Σ ξᵢᵖ` for the model's loss exponent `p`.
    pub sum_xi: f64,
    pub margin_violations: usize,
}

pub fn hinge_stats(model: &SvmModel, d: &AugmentedDataset) -> Result<HingeStats> {
    let f = scores(model, d.base())?;
    let xi: Vec<f64> = f
        .iter()
        .zip(d.labels())
        .map(|(fi, y)| (1.0 - y.sign() * fi).max(0.0))
        .collect();
    let p = model.loss.exponent();
    Ok(HingeStats {
        sum_xi: xi.iter().map(|x| x.powi(p)).sum(),
        margin_violations: xi.iter().filter(|&&x| x > 0.0).count(),
        xi,
    })
}

/// `½‖ŵ‖² + (C/p)·Σξᵢᵖ` at the model's normal vector.
pub fn primal_objective(model: &SvmModel, d: &AugmentedDataset) -> Result<f64> {
    let h = hinge_stats(model, d)?;
    let p = f64::from(model.loss.exponent());
    Ok(0.5 * dot(&model.w_hat, &model.w_hat) + model.penalty_c / p * h.sum_xi)
}

/// Numerical rank of the augmented sample set (modified Gram-Schmidt with a
/// relative drop tolerance). Diagnostic only.
pub fn gram_rank(d: &AugmentedDataset, rel_tol: f64) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let scale = (0..d.n_samples())
        .map(|i| {
            let r = d.augmented_row(i);
            dot(&r, &r).sqrt()
        })
        .fold(0.0, f64::max);
    for i in 0..d.n_samples() {
        if basis.len() == d.dim() {
            break;
        }
        let mut v = d.augmented_row(i);
        for q in &basis {
            let proj = dot(q, &v);
            v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= proj * qi);
        }
        let n = dot(&v, &v).sqrt();
        if n > rel_tol * scale {
            v.iter_mut().for_each(|vi| *vi /= n);
            basis.push(v);
        }
    }
    basis.len()
}
