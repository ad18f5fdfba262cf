mod common;

use common::*;
use ligand_svm::data::{augment, generate_synthetic, Dataset};
use ligand_svm::qp::SolverConfig;
use ligand_svm::svm::{hinge_stats, predict_label, primal_objective, raw_score, train, train_with_dual};
use ligand_svm::{Label, LossVariant};
use rand::seq::SliceRandom;
use rand::Rng;

fn solver(rtol: f64) -> SolverConfig {
    SolverConfig {
        rtol,
        ..SolverConfig::default()
    }
}

fn norm(w: &[f64]) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn duality_gap_closes_at_tight_tolerance() {
    let mut r = rng(21);
    for case in 0..60 {
        let m = r.random_range(2..=8);
        let n = r.random_range(1..=10);
        let d = random_augmented(&mut r, m, n);
        let loss = if case % 2 == 0 {
            LossVariant::L1
        } else {
            LossVariant::L2
        };
        let c = [0.125, 1.0, 8.0][case % 3];
        let out = train_with_dual(&d, loss, c, &solver(1e-6)).unwrap();
        let primal = primal_objective(&out.model, &d).unwrap();
        // the dual is posed as a minimization, so its optimum is −primal
        let dual = -out.solution.objective;
        assert!(primal >= dual - 1e-10 * primal.abs().max(1.0), "case {case}");
        assert!(
            (primal - dual) <= 1e-4 * primal.abs().max(1e-12),
            "case {case}: {primal} vs {dual}"
        );
    }
}

#[test]
fn l1_complementarity() {
    let mut r = rng(22);
    for case in 0..40 {
        let m = r.random_range(2..=8);
        let d = random_augmented(&mut r, m, m + 3);
        let c = [0.125, 1.0, 8.0][case % 3];
        let out = train_with_dual(&d, LossVariant::L1, c, &solver(1e-10)).unwrap();
        for (i, &a) in out.solution.alpha.iter().enumerate() {
            let yf = d.labels()[i].sign() * raw_score(&out.model, d.base().row(i)).unwrap();
            if a == 0.0 {
                assert!(yf >= 1.0 - 1e-6, "case {case} sample {i}: α = 0, yf = {yf}");
            }
            if a == c {
                assert!(yf <= 1.0 + 1e-6, "case {case} sample {i}: α = C, yf = {yf}");
            }
        }
    }
}

#[test]
fn sample_order_does_not_change_the_model() {
    let mut r = rng(23);
    for case in 0..20 {
        let m = r.random_range(3..=8);
        let base = random_dataset(&mut r, m, m + 3);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut r);
        let shuffled = base.subset(&perm, "shuffled");
        let loss = if case % 2 == 0 {
            LossVariant::L1
        } else {
            LossVariant::L2
        };
        let cfg = solver(1e-12);
        let w1 = train(&augment(base, 1.0).unwrap(), loss, 1.0, &cfg).unwrap().w_hat;
        let w2 = train(&augment(shuffled, 1.0).unwrap(), loss, 1.0, &cfg).unwrap().w_hat;
        let diff = w1.iter().zip(&w2).fold(0.0f64, |s, (a, b)| s.max((a - b).abs()));
        assert!(diff <= 1e-8, "case {case}: {diff}");
    }
}

#[test]
fn duplicated_samples_keep_predicted_labels() {
    let d = generate_synthetic(120, 4, 0.5, 4.0, 3).unwrap();
    let twice: Vec<usize> = (0..d.n_samples()).chain(0..d.n_samples()).collect();
    let doubled = d.subset(&twice, "doubled");
    let cfg = solver(1e-8);
    let m1 = train(&augment(d.clone(), 1.0).unwrap(), LossVariant::L1, 1.0, &cfg).unwrap();
    // duplicating every sample doubles the loss term; halving C compensates
    let m2 = train(&augment(doubled, 1.0).unwrap(), LossVariant::L1, 0.5, &cfg).unwrap();
    for row in d.rows() {
        assert_eq!(predict_label(&m1, row).unwrap(), predict_label(&m2, row).unwrap());
    }
}

#[test]
fn smaller_penalty_gives_smaller_normal() {
    let d = augment(generate_synthetic(200, 6, 0.6, 1.5, 8).unwrap(), 1.0).unwrap();
    for loss in [LossVariant::L1, LossVariant::L2] {
        let norms: Vec<f64> = [-5, -2, 1, 4]
            .iter()
            .map(|&p| norm(&train(&d, loss, 2f64.powi(p), &solver(1e-8)).unwrap().w_hat))
            .collect();
        assert!(norms.windows(2).all(|w| w[0] <= w[1] + 1e-9), "{loss}: {norms:?}");
    }
}

#[test]
fn label_follows_score_sign() {
    let d = generate_synthetic(100, 3, 0.4, 1.0, 2).unwrap();
    let m = train(
        &augment(d.clone(), 1.0).unwrap(),
        LossVariant::L2,
        1.0,
        &SolverConfig::default(),
    )
    .unwrap();
    for row in d.rows() {
        let s = raw_score(&m, row).unwrap();
        assert_eq!(predict_label(&m, row).unwrap() == Label::Positive, s >= 0.0);
    }
}

#[test]
fn hinge_terms_match_definition() {
    let d = Dataset::new(
        "h",
        vec![vec![2.0], vec![0.5], vec![-1.0]],
        vec![Label::Positive, Label::Positive, Label::Negative],
    )
    .unwrap();
    let ad = augment(d, 1.0).unwrap();
    let m = train(&ad, LossVariant::L2, 1.0, &solver(1e-10)).unwrap();
    let h = hinge_stats(&m, &ad).unwrap();
    for i in 0..3 {
        let f = raw_score(&m, ad.base().row(i)).unwrap();
        let xi = (1.0 - ad.labels()[i].sign() * f).max(0.0);
        assert_eq!(h.xi[i], xi);
    }
    assert!((h.sum_xi - h.xi.iter().map(|x| x * x).sum::<f64>()).abs() < 1e-15);
}
