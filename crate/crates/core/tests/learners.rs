use aviseg_core::constraints::{identify_constraints, ConstraintParams};
use aviseg_core::dataset::{generate_synthetic, SyntheticSpec};
use aviseg_core::learners::{fit, fit_mmc, Algorithm, LearnerConfig, StopReason};

fn mmc_top_share(signal: Vec<(usize, f64)>, seed: u64) -> (f64, f64) {
    let spec = SyntheticSpec::new(200, 10, signal, 1.0, seed).with_intercept(10.0);
    let (fm, y) = generate_synthetic(&spec).unwrap();
    let cs = identify_constraints(fm.x(), y.values(), &ConstraintParams::default()).unwrap();
    let (m, _) = fit_mmc(fm.x(), &cs.similar, &cs.dissimilar, &LearnerConfig::new(Algorithm::Mmc)).unwrap();
    let mut w = m.diagonal_weights();
    let total: f64 = w.iter().sum();
    w.sort_by(|a, b| b.total_cmp(a));
    (w[0] / total, w[..3].iter().sum::<f64>() / total)
}

#[test]
fn mmc_does_not_concentrate_without_signal() {
    let mut null_top: Vec<f64> = (0..10).map(|s| mmc_top_share(vec![], s).0).collect();
    null_top.sort_by(f64::total_cmp);
    let median = (null_top[4] + null_top[5]) / 2.0;
    assert!(median < 0.5, "null top shares {null_top:?}");
    for s in 0..10 {
        let top3 = mmc_top_share(vec![(0, 3.0), (1, 3.0), (2, 3.0)], s).1;
        assert!(top3 > 0.9, "signal seed {s}: top-3 share {top3}");
    }
}

#[test]
fn every_learner_reports_consistently() {
    let spec = SyntheticSpec::new(80, 6, vec![(0, 1.0), (2, 1.0)], 0.1, 1).with_intercept(10.0);
    let (fm, y) = generate_synthetic(&spec).unwrap();
    let cs = identify_constraints(fm.x(), y.values(), &ConstraintParams::default()).unwrap();
    for alg in [Algorithm::Mmc, Algorithm::Itml, Algorithm::Lmnn] {
        let mut cfg = LearnerConfig::new(alg);
        cfg.lmnn.mu = 0.9;
        let (m, rep) = fit(fm.x(), &cs, &cfg).unwrap();
        assert_eq!(m.dim(), 6);
        assert_eq!(rep.algorithm, alg);
        assert_eq!(rep.trace.len(), rep.iterations);
        assert_eq!(rep.converged, rep.stop_reason != StopReason::MaxIterations);
        assert!(rep.to_text().contains(&alg.to_string()));
    }
}

#[test]
fn learners_are_deterministic() {
    let spec = SyntheticSpec::new(60, 5, vec![(1, 1.0)], 0.1, 9).with_intercept(10.0);
    let (fm, y) = generate_synthetic(&spec).unwrap();
    let cs = identify_constraints(fm.x(), y.values(), &ConstraintParams::default()).unwrap();
    for alg in [Algorithm::Mmc, Algorithm::Itml, Algorithm::Lmnn] {
        let mut cfg = LearnerConfig::new(alg);
        cfg.lmnn.mu = 0.9;
        let a = fit(fm.x(), &cs, &cfg).unwrap().0;
        let b = fit(fm.x(), &cs, &cfg).unwrap().0;
        assert_eq!(a.to_text(), b.to_text());
    }
}
