//! Platt scaling: fit `P(y = +1 | f) = 1 / (1 + exp(A·f + B))` to raw SVM
//! scores by minimizing the cross-entropy against smoothed targets.
//!
//! Note the sign convention: with this parameterization larger scores mean
//! higher probability only when `A < 0`. All derivatives below follow it.
//!
//! The minimizer is a Newton trust-region method with a dogleg step on the
//! 2×2 system. The Hessian is regularized by `σI`.

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    scores: Vec<f64>,
    labels: Vec<Label>,
}

impl CalibrationSet {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::InvalidData(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.len() < 2 {
            return Err(Error::InvalidData("calibration needs at least two samples".into()));
        }
        if scores.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidData("non-finite calibration score".into()));
        }
        let pos = labels.iter().filter(|l| l.is_positive()).count();
        if pos == 0 || pos == labels.len() {
            return Err(Error::SingleClass);
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `(positives, negatives)`
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|l| l.is_positive()).count();
        (pos, self.labels.len() - pos)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetProbabilities {
    pub t: Vec<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Smoothed targets `(N₊+1)/(N₊+2)` for positives and `1/(N₋+2)` for
/// negatives.
pub fn make_targets(cs: &CalibrationSet) -> TargetProbabilities {
    let (n_pos, n_neg) = cs.class_counts();
    let hi = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let lo = 1.0 / (n_neg as f64 + 2.0);
    TargetProbabilities {
        t: cs
            .labels
            .iter()
            .map(|l| if l.is_positive() { hi } else { lo })
            .collect(),
        n_pos,
        n_neg,
    }
}

fn check_finite(a: f64, b: f64, f: f64) -> Result<f64> {
    let z = a * f + b;
    if a.is_finite() && b.is_finite() && f.is_finite() && !z.is_nan() {
        Ok(z)
    } else {
        Err(Error::Numerical(format!(
            "non-finite sigmoid input (a={a}, b={b}, f={f})"
        )))
    }
}

/// `p = 1/(1+exp(z))`, branch chosen so `exp` never overflows.
fn sigmoid_of(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// `1 − p` without cancellation.
fn complement_of(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(z))`
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Posterior `1 / (1 + exp(a·f + b))` evaluated without overflow.
pub fn safe_sigmoid(a: f64, b: f64, f: f64) -> Result<f64> {
    check_finite(a, b, f).map(sigmoid_of)
}

/// `1 − safe_sigmoid(a, b, f)` evaluated without cancellation.
pub fn safe_one_minus_p(a: f64, b: f64, f: f64) -> Result<f64> {
    check_finite(a, b, f).map(complement_of)
}

/// Regularization added to the Hessian diagonal.
pub const HESSIAN_REGULARIZATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Stop when the gradient ∞-norm drops to this.
    pub gradient_tol: f64,
    pub max_iterations: usize,
    pub hessian_regularization: f64,
    pub initial_radius: f64,
    pub shrink_factor: f64,
    pub expand_factor: f64,
    /// Minimum actual/predicted reduction ratio for accepting a step.
    pub acceptance_ratio: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-8,
            max_iterations: 100,
            hessian_regularization: HESSIAN_REGULARIZATION,
            initial_radius: 1.0,
            shrink_factor: 0.25,
            expand_factor: 2.0,
            acceptance_ratio: 0.1,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.gradient_tol,
            self.hessian_regularization,
            self.initial_radius,
            self.shrink_factor,
            self.expand_factor,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.max_iterations == 0 {
            return Err(Error::InvalidParameter("Newton settings must be positive".into()));
        }
        if !(self.acceptance_ratio > 0.0 && self.acceptance_ratio <= 0.25) {
            return Err(Error::InvalidParameter(format!(
                "acceptance ratio must lie in (0, 0.25], got {}",
                self.acceptance_ratio
            )));
        }
        if self.shrink_factor >= 1.0 || self.expand_factor <= 1.0 {
            return Err(Error::InvalidParameter(
                "radius factors must shrink below 1 and expand above 1".into(),
            ));
        }
        Ok(())
    }
}

/// Cross-entropy value with its gradient and (regularized) Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub value: f64,
    pub gradient: [f64; 2],
    /// Row-major `[[h_aa, h_ab], [h_ab, h_bb]]` including `σI`.
    pub hessian: [[f64; 2]; 2],
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

fn cross_entropy_value(a: f64, b: f64, scores: &[f64], t: &[f64]) -> f64 {
    // −[t ln p + (1 − t) ln(1 − p)] with −ln p = softplus(z), −ln(1−p) = softplus(−z)
    compensated_sum(scores.iter().zip(t).map(|(&f, &t)| {
        let z = a * f + b;
        t * softplus(z) + (1.0 - t) * softplus(-z)
    }))
}

/// `−Σ[tⱼ ln pⱼ + (1 − tⱼ) ln(1 − pⱼ)]` at `(a, b)`.
pub fn cross_entropy(params: (f64, f64), cs: &CalibrationSet, t: &TargetProbabilities, sigma: f64) -> CrossEntropy {
    let (a, b) = params;
    let (mut g_a, mut g_b) = (0.0, 0.0);
    let (mut h_aa, mut h_ab, mut h_bb) = (sigma, 0.0, sigma);
    for (&f, &tj) in cs.scores.iter().zip(&t.t) {
        let z = a * f + b;
        let p = sigmoid_of(z);
        let q = complement_of(z);
        let r = tj - p;
        g_a += f * r;
        g_b += r;
        let w = p * q;
        h_aa += f * f * w;
        h_ab += f * w;
        h_bb += w;
    }
    CrossEntropy {
        value: cross_entropy_value(a, b, &cs.scores, &t.t),
        gradient: [g_a, g_b],
        hessian: [[h_aa, h_ab], [h_ab, h_bb]],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidCalibration {
    pub a: f64,
    pub b: f64,
    pub final_cross_entropy: f64,
    pub newton_iterations: usize,
    pub converged: bool,
}

/// Initial guess `(0, ln((l₊+1)/(l₋+1)))`.
pub fn initial_guess(n_pos: usize, n_neg: usize) -> (f64, f64) {
    (0.0, ((n_pos as f64 + 1.0) / (n_neg as f64 + 1.0)).ln())
}

fn solve2(h: &[[f64; 2]; 2], g: [f64; 2]) -> Option<[f64; 2]> {
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if !(det > 0.0) {
        return None;
    }
    Some([
        (h[1][1] * g[0] - h[0][1] * g[1]) / det,
        (h[0][0] * g[1] - h[1][0] * g[0]) / det,
    ])
}

fn quad(h: &[[f64; 2]; 2], p: [f64; 2]) -> f64 {
    p[0] * (h[0][0] * p[0] + h[0][1] * p[1]) + p[1] * (h[1][0] * p[0] + h[1][1] * p[1])
}

fn inf_norm(p: [f64; 2]) -> f64 {
    p[0].abs().max(p[1].abs())
}

fn norm2(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1])
}

/// Dogleg minimizer of `gᵀp + ½pᵀHp` within `‖p‖ ≤ radius`.
fn dogleg(g: [f64; 2], h: &[[f64; 2]; 2], radius: f64) -> [f64; 2] {
    let newton = solve2(h, g).map(|s| [-s[0], -s[1]]);
    if let Some(pn) = newton {
        if norm2(pn) <= radius {
            return pn;
        }
    }
    let gg = g[0] * g[0] + g[1] * g[1];
    let ghg = quad(h, g);
    let gn = gg.sqrt();
    let steepest_to_boundary = [-radius * g[0] / gn, -radius * g[1] / gn];
    if !(ghg > 0.0) {
        return steepest_to_boundary;
    }
    let tau = gg / ghg;
    let pu = [-tau * g[0], -tau * g[1]];
    let Some(pn) = newton else {
        return steepest_to_boundary;
    };
    if norm2(pu) >= radius {
        return steepest_to_boundary;
    }
    // pu + s·(pn − pu) with ‖·‖ = radius, s ∈ [0, 1]
    let d = [pn[0] - pu[0], pn[1] - pu[1]];
    let aa = d[0] * d[0] + d[1] * d[1];
    let bb = 2.0 * (pu[0] * d[0] + pu[1] * d[1]);
    let cc = pu[0] * pu[0] + pu[1] * pu[1] - radius * radius;
    let s = (-bb + (bb * bb - 4.0 * aa * cc).max(0.0).sqrt()) / (2.0 * aa);
    [pu[0] + s * d[0], pu[1] + s * d[1]]
}

/// Fits `(A, B)` by trust-region Newton from the standard initial guess.
pub fn fit_platt(cs: &CalibrationSet, cfg: &NewtonConfig) -> Result<SigmoidCalibration> {
    fit_platt_traced(cs, cfg, |_, _| {})
}

/// As [`fit_platt`], calling `trace((a, b), value)` at the start point and
/// after every accepted step.
pub fn fit_platt_traced(
    cs: &CalibrationSet,
    cfg: &NewtonConfig,
    mut trace: impl FnMut((f64, f64), &CrossEntropy),
) -> Result<SigmoidCalibration> {
    cfg.validate()?;
    let t = make_targets(cs);
    let (mut a, mut b) = initial_guess(t.n_pos, t.n_neg);
    let mut ce = cross_entropy((a, b), cs, &t, cfg.hessian_regularization);
    trace((a, b), &ce);
    let mut radius = cfg.initial_radius;
    let mut iterations = 0;
    let grad_small = |ce: &CrossEntropy| inf_norm(ce.gradient) <= cfg.gradient_tol;
    let mut converged = grad_small(&ce);

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let step = dogleg(ce.gradient, &ce.hessian, radius);
        let predicted = -(ce.gradient[0] * step[0] + ce.gradient[1] * step[1] + 0.5 * quad(&ce.hessian, step));
        if !(predicted > 0.0) {
            // no model decrease left at working precision
            break;
        }
        let (na, nb) = (a + step[0], b + step[1]);
        let candidate = cross_entropy((na, nb), cs, &t, cfg.hessian_regularization);
        if !candidate.value.is_finite() {
            return Err(Error::Numerical("cross-entropy became non-finite".into()));
        }
        let resolution = 64.0 * f64::EPSILON * ce.value.abs().max(1.0);
        let rho = if predicted <= resolution {
            // value differences are rounding noise here; judge by the gradient
            if inf_norm(candidate.gradient) < inf_norm(ce.gradient) && candidate.value <= ce.value + resolution {
                1.0
            } else {
                0.0
            }
        } else {
            (ce.value - candidate.value) / predicted
        };
        let step_norm = norm2(step);
        if rho < 0.25 {
            radius = cfg.shrink_factor * step_norm;
        } else if rho > 0.75 && step_norm >= 0.99 * radius {
            radius *= cfg.expand_factor;
        }
        if rho > cfg.acceptance_ratio {
            a = na;
            b = nb;
            ce = candidate;
            trace((a, b), &ce);
            converged = grad_small(&ce);
        }
        if radius < 1e-14 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }

    Ok(SigmoidCalibration {
        a,
        b,
        final_cross_entropy: ce.value,
        newton_iterations: iterations,
        converged,
    })
}

/// Calibrated probability of the positive class for raw score `f`.
pub fn calibrate_score(cal: &SigmoidCalibration, f: f64) -> Result<f64> {
    safe_sigmoid(cal.a, cal.b, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_values() {
        assert_eq!(safe_sigmoid(0.0, 0.0, 123.0).unwrap(), 0.5);
        let lo = safe_sigmoid(1.0, 0.0, 1000.0).unwrap();
        let hi = safe_sigmoid(1.0, 0.0, -1000.0).unwrap();
        assert!((0.0..1e-300).contains(&lo));
        assert_eq!(hi, 1.0);
        assert_relative_eq!(safe_sigmoid(-1.0, 0.0, 3f64.ln()).unwrap(), 0.75, epsilon = 1e-15);
        assert!(safe_sigmoid(f64::NAN, 0.0, 1.0).is_err());
        assert!(safe_sigmoid(1.0, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn complement_values() {
        assert_eq!(safe_one_minus_p(0.0, 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(safe_one_minus_p(1.0, 0.0, 1000.0).unwrap(), 1.0);
        let tiny = safe_one_minus_p(1.0, 0.0, -700.0).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-300);
    }

    #[test]
    fn targets() {
        let labels = |p: usize, n: usize| -> CalibrationSet {
            let l: Vec<Label> = (0..p + n)
                .map(|i| if i < p { Label::Positive } else { Label::Negative })
                .collect();
            CalibrationSet::new(vec![0.0; p + n], l).unwrap()
        };
        let t = make_targets(&labels(105, 95));
        assert_eq!(t.t[0], 106.0 / 107.0);
        assert_eq!(t.t[200 - 1], 1.0 / 97.0);
        assert_relative_eq!(t.t[0], 0.99065, epsilon = 1e-5);
        assert_relative_eq!(t.t[199], 0.010309, epsilon = 1e-6);
        let t = make_targets(&labels(1, 1));
        assert_eq!(t.t, vec![2.0 / 3.0, 1.0 / 3.0]);
        let t = make_targets(&labels(92, 108));
        assert_eq!(t.t[0], 93.0 / 94.0);
        assert_eq!(t.t[150], 1.0 / 110.0);
        assert_eq!((t.n_pos, t.n_neg), (92, 108));
    }

    #[test]
    fn calibration_set_validation() {
        assert!(matches!(
            CalibrationSet::new(vec![1.0, 2.0], vec![Label::Positive; 2]),
            Err(Error::SingleClass)
        ));
        assert!(CalibrationSet::new(vec![1.0], vec![Label::Positive]).is_err());
        assert!(CalibrationSet::new(vec![1.0, f64::NAN], vec![Label::Positive, Label::Negative]).is_err());
        assert!(CalibrationSet::new(vec![1.0], vec![Label::Positive, Label::Negative]).is_err());
    }

    #[test]
    fn initial_guess_formula() {
        let (a0, b0) = initial_guess(92, 108);
        assert_eq!(a0, 0.0);
        assert!((b0 - (93.0f64 / 109.0).ln()).abs() <= 1e-12);
        assert_relative_eq!(b0, -0.158748, epsilon = 1e-6);
    }

    #[test]
    fn perfect_fit_limit_has_near_zero_entropy() {
        let cs = CalibrationSet::new(vec![-1.0, 1.0], vec![Label::Positive, Label::Negative]).unwrap();
        let t = TargetProbabilities {
            t: vec![1.0, 0.0],
            n_pos: 1,
            n_neg: 1,
        };
        // a = 40: z = ∓40 so p ≈ (1, 0)
        let ce = cross_entropy((40.0, 0.0), &cs, &t, 0.0);
        assert!(ce.value < 1e-16, "{}", ce.value);
    }

    #[test]
    fn equal_scores_give_base_rate() {
        let labels: Vec<Label> = (0..30)
            .map(|i| if i < 10 { Label::Positive } else { Label::Negative })
            .collect();
        let cs = CalibrationSet::new(vec![0.7; 30], labels).unwrap();
        let cal = fit_platt(&cs, &NewtonConfig::default()).unwrap();
        assert!(cal.converged);
        let p = calibrate_score(&cal, 0.7).unwrap();
        // the mean target is the optimum for a constant predictor
        let expect = (10.0 * (11.0 / 12.0) + 20.0 * (1.0 / 22.0)) / 30.0;
        assert_relative_eq!(p, expect, epsilon = 1e-8);
    }

    #[test]
    fn dogleg_respects_radius() {
        let h = [[2.0, 0.0], [0.0, 1.0]];
        let p = dogleg([4.0, 1.0], &h, 10.0);
        assert_relative_eq!(p[0], -2.0);
        assert_relative_eq!(p[1], -1.0);
        let p = dogleg([4.0, 1.0], &h, 0.5);
        assert_relative_eq!(norm2(p), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = NewtonConfig {
            acceptance_ratio: 0.5,
            ..NewtonConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = NewtonConfig {
            gradient_tol: 0.0,
            ..NewtonConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(NewtonConfig::default().validate().is_ok());
    }
}
