//! Triplet LMNN: projected subgradient descent on
//! `(1-μ) Σ_pull d² + μ Σ_R [1 + d²(i,j) - d²(i,k)]₊` over the PSD cone.

use indexmap::IndexSet;
use nalgebra::DMatrix;

use super::{check_pairs, check_triplets, pair_differences, Algorithm, FitReport, LearnerConfig, StopReason};
use crate::constraints::Triplet;
use crate::error::{Error, Result};
use crate::metrics::{psd_projection, Form, MetricMatrix, Provenance};

/// Similar pairs plus the `(anchor, near)` leg of every triplet, as unordered
/// pairs, first occurrence order.
pub fn pull_pairs(similar: &[(usize, usize)], triplets: &[Triplet]) -> Vec<(usize, usize)> {
    let norm = |a: usize, b: usize| (a.min(b), a.max(b));
    let set: IndexSet<(usize, usize)> = similar
        .iter()
        .map(|&(a, b)| norm(a, b))
        .chain(triplets.iter().map(|t| norm(t.anchor, t.near)))
        .filter(|(a, b)| a != b)
        .collect();
    set.into_iter().collect()
}

struct Problem {
    mu: f64,
    /// `Σ_pull v vᵀ`.
    pull_outer: DMatrix<f64>,
    near: DMatrix<f64>,
    far: DMatrix<f64>,
}

/// Row-wise `vᵀ M v` for the rows of `v`.
fn row_quadratic(v: &DMatrix<f64>, m: &DMatrix<f64>) -> Vec<f64> {
    let vm = v * m;
    (0..v.nrows()).map(|r| vm.row(r).dot(&v.row(r))).collect()
}

impl Problem {
    fn new(x: &DMatrix<f64>, pulls: &[(usize, usize)], triplets: &[Triplet], mu: f64) -> Self {
        let p = pair_differences(x, pulls);
        let near_pairs: Vec<_> = triplets.iter().map(|t| (t.anchor, t.near)).collect();
        let far_pairs: Vec<_> = triplets.iter().map(|t| (t.anchor, t.far)).collect();
        Self {
            mu,
            pull_outer: p.transpose() * &p,
            near: pair_differences(x, &near_pairs),
            far: pair_differences(x, &far_pairs),
        }
    }

    fn hinges(&self, m: &DMatrix<f64>) -> Vec<f64> {
        let dn = row_quadratic(&self.near, m);
        let df = row_quadratic(&self.far, m);
        dn.iter().zip(&df).map(|(a, b)| 1.0 + a - b).collect()
    }

    fn objective(&self, m: &DMatrix<f64>) -> f64 {
        let pull = self.pull_outer.component_mul(m).sum();
        let push: f64 = self.hinges(m).iter().map(|h| h.max(0.0)).sum();
        (1.0 - self.mu) * pull + self.mu * push
    }

    fn subgradient(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = &self.pull_outer * (1.0 - self.mu);
        for (r, h) in self.hinges(m).into_iter().enumerate() {
            if h > 0.0 {
                let a = self.near.row(r);
                let b = self.far.row(r);
                g += (a.transpose() * a - b.transpose() * b) * self.mu;
            }
        }
        g
    }
}

/// LMNN objective of `M` on the given constraints.
pub fn lmnn_objective(
    x: &DMatrix<f64>,
    similar: &[(usize, usize)],
    triplets: &[Triplet],
    m: &MetricMatrix,
    mu: f64,
) -> Result<f64> {
    check_pairs(x.nrows(), similar)?;
    check_triplets(x.nrows(), triplets)?;
    if m.dim() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            actual: m.dim(),
        });
    }
    Ok(Problem::new(x, &pull_pairs(similar, triplets), triplets, mu).objective(m.matrix()))
}

const STEP_FLOOR: f64 = 1e-12;

pub fn fit_lmnn(
    x: &DMatrix<f64>,
    similar: &[(usize, usize)],
    triplets: &[Triplet],
    cfg: &LearnerConfig,
) -> Result<(MetricMatrix, FitReport)> {
    cfg.validate()?;
    check_pairs(x.nrows(), similar)?;
    check_triplets(x.nrows(), triplets)?;
    if triplets.is_empty() {
        return Err(Error::Degenerate("LMNN needs at least one triplet".into()));
    }
    let d = x.ncols();
    let problem = Problem::new(x, &pull_pairs(similar, triplets), triplets, cfg.lmnn.mu);
    let mut m = DMatrix::identity(d, d);
    let mut value = problem.objective(&m);
    let mut report = FitReport::new(Algorithm::Lmnn, value);
    let mut step = match cfg.lmnn.initial_step {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::Config(format!("LMNN step {s} must be > 0"))),
        None => {
            let g = problem.subgradient(&m);
            0.1 * m.norm() / g.norm().max(f64::MIN_POSITIVE)
        }
    };
    let floor = step * STEP_FLOOR;
    let mut stalled = 0;
    let mut reason = StopReason::MaxIterations;

    'outer: for _ in 0..cfg.max_iter {
        let g = problem.subgradient(&m);
        if g.norm() == 0.0 {
            reason = StopReason::Stationary;
            break;
        }
        loop {
            let cand = psd_projection(&(&m - &g * step))?;
            let cand_value = problem.objective(&cand);
            if cand_value < value {
                let change = (value - cand_value).abs() / value.abs().max(1.0);
                m = cand;
                value = cand_value;
                report.trace.push(value);
                if cfg.record_iterates {
                    report.iterates.push(m.clone());
                }
                step *= cfg.lmnn.grow;
                stalled = if change < cfg.tol { stalled + 1 } else { 0 };
                if stalled >= cfg.patience {
                    reason = StopReason::Tolerance;
                    break 'outer;
                }
                break;
            }
            step *= cfg.lmnn.shrink;
            if step < floor {
                reason = StopReason::StepCollapse;
                break 'outer;
            }
        }
    }
    if reason == StopReason::StepCollapse && report.trace.is_empty() {
        return Err(Error::Optimizer("LMNN found no descent step from the identity".into()));
    }
    report.finish(reason);
    Ok((MetricMatrix::new(m, Form::Full, Provenance::Lmnn)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{evaluate_constraints, ConstraintBounds};

    fn toy() -> (DMatrix<f64>, Vec<(usize, usize)>, Vec<Triplet>) {
        let x = DMatrix::from_row_slice(
            5,
            2,
            &[0.0, 0.0, 1.0, 3.0, 2.0, -2.0, 3.0, 1.0, 4.0, 0.0],
        );
        let t = |a, b, c| Triplet { anchor: a, near: b, far: c };
        let triplets = vec![t(0, 1, 2), t(1, 2, 3), t(2, 3, 4), t(4, 3, 2), t(3, 2, 1), t(0, 1, 4)];
        (x, vec![(0, 1)], triplets)
    }

    #[test]
    fn pull_pairs_are_unordered_and_unique() {
        let t = Triplet { anchor: 1, near: 0, far: 2 };
        assert_eq!(pull_pairs(&[(0, 1), (2, 3)], &[t]), vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn trace_decreases_and_matches_evaluation() {
        let (x, s, r) = toy();
        let mut cfg = LearnerConfig::new(Algorithm::Lmnn);
        cfg.record_iterates = true;
        let (m, report) = fit_lmnn(&x, &s, &r, &cfg).unwrap();
        assert!(m.min_eigenvalue().unwrap() >= -1e-8);
        assert_eq!(report.trace.len(), report.iterations);
        assert!(report.trace[0] < report.initial_objective);
        for w in report.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-7);
        }
        let bounds = ConstraintBounds { upper: 1.0, lower: 2.0 };
        for (iterate, &value) in report.iterates.iter().zip(&report.trace) {
            let metric = MetricMatrix::new(iterate.clone(), Form::Full, Provenance::Lmnn).unwrap();
            let ev = evaluate_constraints(&metric, &x, &s, &[], &r, bounds, cfg.lmnn.mu).unwrap();
            assert!((ev.lmnn_loss - value).abs() < 1e-9, "{} vs {value}", ev.lmnn_loss);
        }
    }

    #[test]
    fn empty_triplets_are_an_error() {
        let (x, s, _) = toy();
        assert!(fit_lmnn(&x, &s, &[], &LearnerConfig::new(Algorithm::Lmnn)).is_err());
    }
}
