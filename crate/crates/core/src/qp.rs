//! Bound-constrained convex quadratic programming.
//!
//! Minimizes `f(x) = ½ xᵀAx + cᵀx` subject to `l ≤ x ≤ u` (with `u`
//! possibly `+∞`) by MPRGP, the Modified Proportioning with Reduced Gradient
//! Projection method. The Hessian `A` is only ever touched through
//! [`LinearOperator::apply`], so callers can supply implicitly represented
//! matrices.
//!
//! Each iteration is one of three steps:
//!
//! * **CG step** – the iterate is *proportional* (`‖β‖² ≤ Γ²‖φ‖²`) and the
//!   conjugate-gradient step along the free set stays feasible;
//! * **expansion step** – the CG step would leave the box, so move to the
//!   boundary, then take a fixed step `ᾱ` along the free gradient and project;
//! * **proportioning step** – the chopped gradient dominates, so minimize
//!   along it to release variables from their bounds.
//!
//! Here `φ` is the free gradient (gradient on inactive components) and `β`
//! the chopped gradient (the KKT-violating part on active components).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::dot;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Symmetric linear map `v ↦ Av`. Implementations must be pure.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        (**self).apply(v, out)
    }
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    n: usize,
    data: Vec<f64>,
}

impl DenseOperator {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "{} entries do not form a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.len(), rows.concat())
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in d.iter().enumerate() {
            data[i * n + i] = v;
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.n)) {
            *o = dot(row, v);
        }
    }
}

/// `½ xᵀAx + cᵀx` over `l ≤ x ≤ u`; `upper = None` means unbounded above.
#[derive(Debug, Clone)]
pub struct QpProblem<A> {
    hessian: A,
    linear_term: Vec<f64>,
    lower: Vec<f64>,
    upper: Option<Vec<f64>>,
}

impl<A: LinearOperator> QpProblem<A> {
    pub fn new(hessian: A, linear_term: Vec<f64>, lower: Vec<f64>, upper: Option<Vec<f64>>) -> Result<Self> {
        let m = hessian.dim();
        if m == 0 {
            return Err(Error::InvalidParameter("empty QP".into()));
        }
        if linear_term.len() != m || lower.len() != m || upper.as_ref().is_some_and(|u| u.len() != m) {
            return Err(Error::InvalidParameter(format!("QP vectors must all have length {m}")));
        }
        if let Some(u) = &upper {
            if let Some(i) = (0..m).find(|&i| !(lower[i] <= u[i])) {
                return Err(Error::InvalidParameter(format!(
                    "lower bound {} exceeds upper bound {} at index {i}",
                    lower[i], u[i]
                )));
            }
        }
        Ok(Self {
            hessian,
            linear_term,
            lower,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.linear_term.len()
    }

    pub fn hessian(&self) -> &A {
        &self.hessian
    }

    pub fn linear_term(&self) -> &[f64] {
        &self.linear_term
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> Option<&[f64]> {
        self.upper.as_deref()
    }

    fn upper_at(&self, i: usize) -> f64 {
        self.upper.as_ref().map_or(f64::INFINITY, |u| u[i])
    }

    /// Projection onto the feasible box.
    pub fn project(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.max(self.lower[i]).min(self.upper_at(i));
        }
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, &xi)| xi >= self.lower[i] && xi <= self.upper_at(i))
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.hessian.apply(x, &mut g);
        for (gi, ci) in g.iter_mut().zip(&self.linear_term) {
            *gi += ci;
        }
        g
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        objective_from_gradient(x, &g, &self.linear_term)
    }

    fn split_gradient(&self, x: &[f64], g: &[f64], free: &mut [f64], chopped: &mut [f64]) {
        for i in 0..x.len() {
            if x[i] <= self.lower[i] {
                free[i] = 0.0;
                chopped[i] = g[i].min(0.0);
            } else if x[i] >= self.upper_at(i) {
                free[i] = 0.0;
                chopped[i] = g[i].max(0.0);
            } else {
                free[i] = g[i];
                chopped[i] = 0.0;
            }
        }
    }

    /// Largest `t ≥ 0` with `x - t·d` feasible.
    fn feasible_step(&self, x: &[f64], d: &[f64]) -> f64 {
        let mut step = f64::INFINITY;
        for i in 0..x.len() {
            if d[i] > 0.0 {
                step = step.min((x[i] - self.lower[i]) / d[i]);
            } else if d[i] < 0.0 {
                let u = self.upper_at(i);
                if u.is_finite() {
                    step = step.min((x[i] - u) / d[i]);
                }
            }
        }
        step.max(0.0)
    }
}

/// `½xᵀ(g + c)` equals `½xᵀAx + cᵀx` when `g = Ax + c`.
fn objective_from_gradient(x: &[f64], g: &[f64], c: &[f64]) -> f64 {
    0.5 * x.iter().zip(g).zip(c).map(|((x, g), c)| x * (g + c)).sum::<f64>()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGradient {
    pub free: Vec<f64>,
    pub chopped: Vec<f64>,
    /// `‖free + chopped‖₂`; zero exactly at KKT points.
    pub norm: f64,
}

pub fn projected_gradient<A: LinearOperator>(p: &QpProblem<A>, x: &[f64]) -> Result<ProjectedGradient> {
    if !p.is_feasible(x) {
        return Err(Error::InvalidParameter("point violates the bounds".into()));
    }
    let g = p.gradient(x);
    let mut free = vec![0.0; x.len()];
    let mut chopped = vec![0.0; x.len()];
    p.split_gradient(x, &g, &mut free, &mut chopped);
    // free and chopped have disjoint supports
    let norm = (dot(&free, &free) + dot(&chopped, &chopped)).sqrt();
    Ok(ProjectedGradient { free, chopped, norm })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionStep {
    /// `1.95 / ‖A‖₂` with `‖A‖₂` from power iteration.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rtol: f64,
    pub max_iterations: usize,
    pub expansion_step: ExpansionStep,
    pub proportioning_constant: f64,
    pub norm_estimate_iterations: usize,
    pub norm_estimate_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-1,
            max_iterations: 10_000,
            expansion_step: ExpansionStep::Auto,
            proportioning_constant: 1.0,
            norm_estimate_iterations: 100,
            norm_estimate_tol: 1e-4,
        }
    }
}

/// Multiplier in the automatic expansion step `ᾱ = 1.95 / ‖A‖₂`.
pub const EXPANSION_STEP_FACTOR: f64 = 1.95;

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rtol must be positive, got {}",
                self.rtol
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.proportioning_constant > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "proportioning constant must be positive, got {}",
                self.proportioning_constant
            )));
        }
        if let ExpansionStep::Fixed(a) = self.expansion_step {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "expansion step must be positive, got {a}"
                )));
            }
        }
        if self.norm_estimate_iterations == 0 || !(self.norm_estimate_tol > 0.0) {
            return Err(Error::InvalidParameter("invalid norm estimate settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
}

const POWER_ITERATION_SEED: u64 = 0x6e6f_726d;

/// Largest eigenvalue of a symmetric PSD operator (its spectral norm) by
/// power iteration from a seeded uniform start vector. Stops when the
/// Rayleigh quotient changes by less than `norm_estimate_tol` relative.
pub fn estimate_spectral_norm<A: LinearOperator + ?Sized>(
    op: &A,
    dim: usize,
    cfg: &SolverConfig,
) -> Result<NormEstimate> {
    if dim == 0 {
        return Err(Error::InvalidParameter("operator dimension is zero".into()));
    }
    let mut rng = rng_from_seed(POWER_ITERATION_SEED);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() + 0.5).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut w = vec![0.0; dim];
    let mut lambda = 0.0;
    for it in 1..=cfg.norm_estimate_iterations {
        op.apply(&v, &mut w);
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("operator produced non-finite values".into()));
        }
        let next = dot(&v, &w);
        let wn = norm(&w);
        if wn == 0.0 {
            return Ok(NormEstimate {
                value: 0.0,
                iterations: it,
            });
        }
        let stalled = it > 1 && (next - lambda).abs() <= cfg.norm_estimate_tol * next.abs();
        lambda = next;
        if stalled {
            return Ok(NormEstimate {
                value: lambda,
                iterations: it,
            });
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
    }
    Ok(NormEstimate {
        value: lambda,
        iterations: cfg.norm_estimate_iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Initial,
    Cg,
    Expansion,
    Proportioning,
}

/// Snapshot handed to a solve monitor after every iteration.
#[derive(Debug)]
pub struct Iterate<'a> {
    pub iteration: usize,
    pub kind: StepKind,
    pub x: &'a [f64],
    pub objective: f64,
    pub projected_gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub initial_projected_gradient_norm: f64,
    pub final_projected_gradient_norm: f64,
    pub objective: f64,
    pub converged: bool,
    pub hessian_applications: usize,
    pub expansion_step_length: f64,
    pub cg_steps: usize,
    pub expansion_steps: usize,
    pub proportioning_steps: usize,
}

pub fn mprgp_solve<A: LinearOperator>(p: &QpProblem<A>, x0: &[f64], cfg: &SolverConfig) -> Result<QpSolution> {
    mprgp_solve_monitored(p, x0, cfg, |_| {})
}

/// MPRGP with a per-iteration monitor (also called once for the projected
/// initial guess).
pub fn mprgp_solve_monitored<A: LinearOperator>(
    p: &QpProblem<A>,
    x0: &[f64],
    cfg: &SolverConfig,
    mut monitor: impl FnMut(&Iterate<'_>),
) -> Result<QpSolution> {
    cfg.validate()?;
    let m = p.dim();
    if x0.len() != m {
        return Err(Error::InvalidParameter(format!(
            "initial guess has length {}, expected {m}",
            x0.len()
        )));
    }
    let a = &p.hessian;
    let c = &p.linear_term;
    let mut applications = 0usize;
    let step_len = match cfg.expansion_step {
        ExpansionStep::Fixed(s) => s,
        ExpansionStep::Auto => {
            let est = estimate_spectral_norm(a, m, cfg)?;
            applications += est.iterations;
            if !(est.value > 0.0) {
                return Err(Error::Numerical("Hessian has zero spectral norm".into()));
            }
            EXPANSION_STEP_FACTOR / est.value
        }
    };
    let mut apply = |v: &[f64], out: &mut [f64]| {
        applications += 1;
        a.apply(v, out);
    };

    let mut x = x0.to_vec();
    p.project(&mut x);
    let mut g = vec![0.0; m];
    apply(&x, &mut g);
    for (gi, ci) in g.iter_mut().zip(c) {
        *gi += ci;
    }

    let mut free = vec![0.0; m];
    let mut chopped = vec![0.0; m];
    p.split_gradient(&x, &g, &mut free, &mut chopped);
    let pg_norm = |free: &[f64], chopped: &[f64]| (dot(free, free) + dot(chopped, chopped)).sqrt();
    let gp0 = pg_norm(&free, &chopped);
    let mut gp = gp0;
    let mut f = objective_from_gradient(&x, &g, c);
    if !f.is_finite() {
        return Err(Error::Numerical("non-finite objective at the initial guess".into()));
    }
    monitor(&Iterate {
        iteration: 0,
        kind: StepKind::Initial,
        x: &x,
        objective: f,
        projected_gradient_norm: gp,
    });

    let gamma2 = cfg.proportioning_constant * cfg.proportioning_constant;
    let tol = cfg.rtol * gp0;
    let mut dir = free.clone();
    let mut a_dir = vec![0.0; m];
    let (mut n_cg, mut n_exp, mut n_prop) = (0, 0, 0);
    let mut iterations = 0;
    let mut converged = gp <= tol;

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let kind;
        if dot(&chopped, &chopped) <= gamma2 * dot(&free, &free) {
            apply(&dir, &mut a_dir);
            let curvature = dot(&dir, &a_dir);
            let a_cg = if curvature > 0.0 {
                dot(&g, &dir) / curvature
            } else {
                f64::INFINITY
            };
            let a_f = p.feasible_step(&x, &dir);
            if a_cg <= a_f {
                kind = StepKind::Cg;
                n_cg += 1;
                for i in 0..m {
                    x[i] -= a_cg * dir[i];
                    g[i] -= a_cg * a_dir[i];
                }
                p.project(&mut x);
                p.split_gradient(&x, &g, &mut free, &mut chopped);
                let beta = dot(&free, &a_dir) / curvature;
                for i in 0..m {
                    dir[i] = free[i] - beta * dir[i];
                }
            } else {
                kind = StepKind::Expansion;
                n_exp += 1;
                for i in 0..m {
                    x[i] -= a_f * dir[i];
                    g[i] -= a_f * a_dir[i];
                }
                p.project(&mut x);
                p.split_gradient(&x, &g, &mut free, &mut chopped);
                for i in 0..m {
                    x[i] -= step_len * free[i];
                }
                p.project(&mut x);
                apply(&x, &mut g);
                for (gi, ci) in g.iter_mut().zip(c) {
                    *gi += ci;
                }
                p.split_gradient(&x, &g, &mut free, &mut chopped);
                dir.copy_from_slice(&free);
            }
        } else {
            kind = StepKind::Proportioning;
            n_prop += 1;
            apply(&chopped, &mut a_dir);
            let curvature = dot(&chopped, &a_dir);
            let a_cg = if curvature > 0.0 {
                dot(&g, &chopped) / curvature
            } else {
                f64::INFINITY
            };
            let step = a_cg.min(p.feasible_step(&x, &chopped));
            if !step.is_finite() {
                return Err(Error::Numerical(
                    "unbounded descent direction: the QP has no minimizer".into(),
                ));
            }
            for i in 0..m {
                x[i] -= step * chopped[i];
                g[i] -= step * a_dir[i];
            }
            p.project(&mut x);
            p.split_gradient(&x, &g, &mut free, &mut chopped);
            dir.copy_from_slice(&free);
        }

        let f_next = objective_from_gradient(&x, &g, c);
        if !f_next.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite objective at iteration {iterations}; the problem is ill-posed"
            )));
        }
        debug_assert!(
            f_next <= f + 1e-9 * (1.0 + f.abs()),
            "objective increased from {f} to {f_next} in a {kind:?} step"
        );
        f = f_next;
        gp = pg_norm(&free, &chopped);
        converged = gp <= tol;
        monitor(&Iterate {
            iteration: iterations,
            kind,
            x: &x,
            objective: f,
            projected_gradient_norm: gp,
        });
    }

    Ok(QpSolution {
        alpha: x,
        iterations,
        initial_projected_gradient_norm: gp0,
        final_projected_gradient_norm: gp,
        objective: f,
        converged,
        hessian_applications: applications,
        expansion_step_length: step_len,
        cg_steps: n_cg,
        expansion_steps: n_exp,
        proportioning_steps: n_prop,
    })
}
