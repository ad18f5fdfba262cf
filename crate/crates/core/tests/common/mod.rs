//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ligand_svm::data::{augment, AugmentedDataset, Dataset, Label};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random labelled dataset with `m` samples and `n` features, both classes present.
pub fn random_dataset(r: &mut impl Rng, m: usize, n: usize) -> Dataset {
    assert!(m >= 2);
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut labels: Vec<Label> = (0..m)
        .map(|_| {
            if r.random_bool(0.5) {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();
    labels[0] = Label::Positive;
    labels[1] = Label::Negative;
    Dataset::new("random", rows, labels).unwrap()
}

pub fn random_augmented(r: &mut impl Rng, m: usize, n: usize) -> AugmentedDataset {
    augment(random_dataset(r, m, n), 1.0).unwrap()
}

/// Dense `YX̂ᵀX̂Y` built entry by entry.
pub fn dense_dual_hessian(d: &AugmentedDataset) -> DMatrix<f64> {
    let m = d.n_samples();
    let rows: Vec<Vec<f64>> = (0..m).map(|i| d.augmented_row(i)).collect();
    let y: Vec<f64> = d.labels().iter().map(|l| l.sign()).collect();
    DMatrix::from_fn(m, m, |i, j| {
        y[i] * y[j] * rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum::<f64>()
    })
}

/// Exact minimizer of `½xᵀAx + cᵀx` on `lower ≤ x ≤ upper` for positive
/// definite `A`, by enumerating every assignment of each coordinate to
/// {at lower, at upper, free} and keeping the KKT point.
pub fn box_qp_oracle(a: &DMatrix<f64>, c: &[f64], lower: &[f64], upper: Option<&[f64]>) -> Vec<f64> {
    let m = c.len();
    let states = if upper.is_some() { 3usize } else { 2 };
    let total = states.pow(m as u32);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..total {
        let mut pattern = vec![0u8; m];
        let mut k = code;
        for p in pattern.iter_mut() {
            *p = (k % states) as u8;
            k /= states;
        }
        // 0 = free, 1 = lower, 2 = upper
        let mut x = vec![0.0; m];
        for i in 0..m {
            match pattern[i] {
                1 => x[i] = lower[i],
                2 => x[i] = upper.unwrap()[i],
                _ => {}
            }
        }
        let free: Vec<usize> = (0..m).filter(|&i| pattern[i] == 0).collect();
        if !free.is_empty() {
            let aff = DMatrix::from_fn(free.len(), free.len(), |i, j| a[(free[i], free[j])]);
            let rhs = DVector::from_fn(free.len(), |i, _| {
                let fi = free[i];
                -c[fi]
                    - (0..m)
                        .filter(|&j| pattern[j] != 0)
                        .map(|j| a[(fi, j)] * x[j])
                        .sum::<f64>()
            });
            let Some(sol) = aff.lu().solve(&rhs) else { continue };
            for (k, &fi) in free.iter().enumerate() {
                x[fi] = sol[k];
            }
        }
        let g: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|j| a[(i, j)] * x[j]).sum::<f64>() + c[i])
            .collect();
        let tol = 1e-9 * (1.0 + g.iter().fold(0.0f64, |s, v| s.max(v.abs())));
        let kkt = (0..m).all(|i| match pattern[i] {
            0 => x[i] >= lower[i] - 1e-12 && upper.is_none_or(|u| x[i] <= u[i] + 1e-12),
            1 => g[i] >= -tol,
            _ => g[i] <= tol,
        });
        if !kkt {
            continue;
        }
        let f = 0.5 * (0..m).map(|i| x[i] * (g[i] + c[i])).sum::<f64>();
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.expect("a positive definite box QP has a KKT point").1
}

pub fn largest_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
}

pub fn smallest_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v))
}

/// Random symmetric positive semidefinite matrix `BᵀB`.
pub fn random_sps(r: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n + 2, n, |_, _| r.sample::<f64, _>(StandardNormal));
    b.transpose() * b
}

/// `(#ordered pairs + ½#tied pairs) / (m⁺m⁻)` over all cross-class pairs.
pub fn auc_pair_count(scores: &[f64], labels: &[Label]) -> f64 {
    let mut twice = 0u64;
    let (mut np, mut nn) = (0u64, 0u64);
    for (i, li) in labels.iter().enumerate() {
        if li.is_positive() {
            np += 1;
        } else {
            nn += 1;
            continue;
        }
        for (j, lj) in labels.iter().enumerate() {
            if lj.is_positive() {
                continue;
            }
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    twice as f64 / (2.0 * np as f64 * nn as f64)
}

/// `1/(1+exp(Af+B))` with no overflow guard.
pub fn naive_sigmoid(a: f64, b: f64, f: f64) -> f64 {
    1.0 / (1.0 + (a * f + b).exp())
}

/// Platt cross-entropy in its textbook form.
pub fn naive_cross_entropy(a: f64, b: f64, f: &[f64], t: &[f64]) -> f64 {
    f.iter()
        .zip(t)
        .map(|(&fi, &ti)| {
            let p = naive_sigmoid(a, b, fi);
            -(ti * p.ln() + (1.0 - ti) * (1.0 - p).ln())
        })
        .sum()
}

/// Scores with `P(+1 | f) = 1/(1+exp(Af+B))`, `f ~ U(-3, 3)`.
pub fn sigmoid_sample(r: &mut impl Rng, l: usize, a: f64, b: f64) -> (Vec<f64>, Vec<Label>) {
    let mut scores = Vec::with_capacity(l);
    let mut labels = Vec::with_capacity(l);
    for _ in 0..l {
        let f = r.random_range(-3.0..3.0);
        let p = naive_sigmoid(a, b, f);
        scores.push(f);
        labels.push(if r.random_bool(p) {
            Label::Positive
        } else {
            Label::Negative
        });
    }
    (scores, labels)
}

/// `levels` evenly spaced scores in `[-3, 3]`, each repeated `per_level`
/// times with `round(per_level · P(+1 | f))` positives, so the empirical
/// class frequencies follow the sigmoid without sampling noise.
pub fn sigmoid_grid(levels: usize, per_level: usize, a: f64, b: f64) -> (Vec<f64>, Vec<Label>) {
    let mut scores = Vec::with_capacity(levels * per_level);
    let mut labels = Vec::with_capacity(levels * per_level);
    for i in 0..levels {
        let f = -3.0 + 6.0 * i as f64 / (levels - 1) as f64;
        let pos = (per_level as f64 * naive_sigmoid(a, b, f)).round() as usize;
        for k in 0..per_level {
            scores.push(f);
            labels.push(if k < pos { Label::Positive } else { Label::Negative });
        }
    }
    (scores, labels)
}

/// Precision, sensitivity and F1 computed from scratch.
pub fn rates(pred: &[Label], actual: &[Label]) -> (f64, f64, f64) {
    let tp = pred
        .iter()
        .zip(actual)
        .filter(|(p, a)| p.is_positive() && a.is_positive())
        .count() as f64;
    let pp = pred.iter().filter(|p| p.is_positive()).count() as f64;
    let ap = actual.iter().filter(|a| a.is_positive()).count() as f64;
    let pre = if pp == 0.0 { 0.0 } else { tp / pp };
    let sen = if ap == 0.0 { 0.0 } else { tp / ap };
    let f1 = if pre + sen == 0.0 {
        0.0
    } else {
        2.0 * pre * sen / (pre + sen)
    };
    (pre, sen, f1)
}

/// Exhaustive threshold scan with the balanced rule, independent of the library.
pub fn threshold_scan(probs: &[f64], labels: &[Label], n: usize) -> (f64, bool) {
    let mut best: Option<(f64, f64, f64)> = None; // (gap, f1, thr)
    let mut best_f1: Option<(f64, f64)> = None;
    for i in 1..n {
        let thr = i as f64 / n as f64;
        let pred: Vec<Label> = probs
            .iter()
            .map(|&p| if p > thr { Label::Positive } else { Label::Negative })
            .collect();
        let (pre, sen, f1) = rates(&pred, labels);
        if best_f1.is_none_or(|(bf, _)| f1 > bf + 1e-12) {
            best_f1 = Some((f1, thr));
        }
        if f1 <= 0.5 {
            continue;
        }
        let gap = (pre - sen).abs();
        let better = match best {
            None => true,
            Some((bg, bf, _)) => gap < bg - 1e-12 || ((gap - bg).abs() <= 1e-12 && f1 > bf + 1e-12),
        };
        if better {
            best = Some((gap, f1, thr));
        }
    }
    match best {
        Some((_, _, thr)) => (thr, true),
        None => (best_f1.unwrap().1, false),
    }
}
