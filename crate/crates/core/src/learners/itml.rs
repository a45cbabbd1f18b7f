//! Information-theoretic metric learning: LogDet-regularized Bregman
//! projections onto pairwise distance constraints with slack.

use nalgebra::{DMatrix, DVector};

use super::{check_pairs, pair_differences, Algorithm, FitReport, LearnerConfig, StopReason};
use crate::error::{Error, Result};
use crate::metrics::{min_eigenvalue, Form, MetricMatrix, Provenance};
use crate::stats::percentile;

/// `D_ld(M, M0) = tr(M M0⁻¹) - ln det(M M0⁻¹) - d`. Both matrices must be
/// positive definite.
pub fn logdet_divergence(m: &DMatrix<f64>, m0: &DMatrix<f64>) -> Result<f64> {
    if m.shape() != m0.shape() || !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m0.nrows(),
            actual: m.nrows(),
        });
    }
    let c0 = m0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidMetric("prior is not positive definite".into()))?;
    let c = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidMetric("matrix is not positive definite".into()))?;
    let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = (c0.inverse() * m).trace();
    Ok(trace - (logdet(&c.l()) - logdet(&c0.l())) - m.nrows() as f64)
}

/// Default `(u, l)`: low and high quantiles of squared prior distances over
/// all pairs of rows.
pub fn default_bounds(x: &DMatrix<f64>, m0: &DMatrix<f64>, quantiles: (f64, f64)) -> Result<(f64, f64)> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Degenerate("need at least two rows for ITML bounds".into()));
    }
    let mut sq = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let v = (x.row(i) - x.row(j)).transpose();
            sq.push(v.dot(&(m0 * &v)));
        }
    }
    let (u, l) = (percentile(&sq, quantiles.0), percentile(&sq, quantiles.1));
    if !(u < l) {
        return Err(Error::Degenerate(format!(
            "ITML bounds collapse: u = {u}, l = {l}"
        )));
    }
    Ok((u, l))
}

struct Constraint {
    v: DVector<f64>,
    similar: bool,
}

fn squared(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

fn hinge_total(m: &DMatrix<f64>, cons: &[Constraint], u: f64, l: f64) -> f64 {
    cons.iter()
        .map(|c| {
            let p = squared(m, &c.v);
            if c.similar {
                (p - u).max(0.0)
            } else {
                (l - p).max(0.0)
            }
        })
        .sum()
}

pub fn fit_itml(
    x: &DMatrix<f64>,
    similar: &[(usize, usize)],
    dissimilar: &[(usize, usize)],
    cfg: &LearnerConfig,
) -> Result<(MetricMatrix, FitReport)> {
    cfg.validate()?;
    check_pairs(x.nrows(), similar)?;
    check_pairs(x.nrows(), dissimilar)?;
    let d = x.ncols();
    let m0 = match &cfg.itml.prior {
        Some(p) if p.shape() != (d, d) => {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: p.nrows(),
            })
        }
        Some(p) => p.clone(),
        None => DMatrix::identity(d, d),
    };
    if m0.clone().cholesky().is_none() {
        return Err(Error::InvalidMetric("ITML prior must be positive definite".into()));
    }
    if similar.is_empty() && dissimilar.is_empty() {
        let mut report = FitReport::new(Algorithm::Itml, 0.0);
        report.finish(StopReason::NoConstraints);
        return Ok((MetricMatrix::new(m0, Form::Full, Provenance::Itml)?, report));
    }
    let (u, l) = match cfg.itml.bounds {
        Some(b) => b,
        None => default_bounds(x, &m0, cfg.itml.bound_quantiles)?,
    };
    if !(u < l) {
        return Err(Error::Config(format!("ITML bounds need u < l, got u={u} l={l}")));
    }
    let gamma = cfg.itml.gamma;

    let mut cons = Vec::new();
    let mut dropped = 0;
    for (pairs, is_similar) in [(similar, true), (dissimilar, false)] {
        let diffs = pair_differences(x, pairs);
        for r in 0..diffs.nrows() {
            let v = diffs.row(r).transpose();
            if v.iter().all(|&e| e == 0.0) {
                dropped += 1;
            } else {
                cons.push(Constraint { v, similar: is_similar });
            }
        }
    }

    let mut m = m0.clone();
    let mut report = FitReport::new(Algorithm::Itml, 0.0);
    report.initial_objective = hinge_total(&m, &cons, u, l) * gamma;
    if dropped > 0 {
        report.notes.push(format!("{dropped} constraints with identical endpoints skipped"));
    }
    report.notes.push(format!("bounds u={u} l={l}"));
    if cons.is_empty() {
        report.finish(StopReason::NoConstraints);
        report.objective = 0.0;
        return Ok((MetricMatrix::new(m, Form::Full, Provenance::Itml)?, report));
    }

    let mut lambda = vec![0.0_f64; cons.len()];
    let mut bhat: Vec<f64> = cons.iter().map(|c| if c.similar { u } else { l }).collect();
    let gamma_proj = if gamma.is_infinite() { 1.0 } else { gamma / (gamma + 1.0) };
    let mut reason = StopReason::MaxIterations;

    for _ in 0..cfg.max_iter {
        let lambda_old = lambda.clone();
        for (idx, c) in cons.iter().enumerate() {
            let mv = &m * &c.v;
            let p = c.v.dot(&mv);
            if p <= 0.0 {
                continue;
            }
            let beta;
            if c.similar {
                let alpha = lambda[idx].min(gamma_proj * (1.0 / p - 1.0 / bhat[idx]));
                lambda[idx] -= alpha;
                beta = alpha / (1.0 - alpha * p);
                bhat[idx] = 1.0 / (1.0 / bhat[idx] + alpha / gamma);
            } else {
                let alpha = lambda[idx].min(gamma_proj * (1.0 / bhat[idx] - 1.0 / p));
                lambda[idx] -= alpha;
                beta = -alpha / (1.0 + alpha * p);
                bhat[idx] = 1.0 / (1.0 / bhat[idx] - alpha / gamma);
            }
            for i in 0..d {
                for j in i..d {
                    let t = beta * mv[i] * mv[j];
                    m[(i, j)] += t;
                    if i != j {
                        m[(j, i)] += t;
                    }
                }
            }
        }
        let eig = min_eigenvalue(&m)?;
        report.min_eigenvalues.push(eig);
        let divergence = logdet_divergence(&m, &m0).unwrap_or(f64::INFINITY);
        report.trace.push(divergence + gamma * hinge_total(&m, &cons, u, l));
        if cfg.record_iterates {
            report.iterates.push(m.clone());
        }

        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let normsum = norm(&lambda) + norm(&lambda_old);
        if normsum == 0.0 {
            reason = StopReason::Stationary;
            break;
        }
        let change: f64 = lambda.iter().zip(&lambda_old).map(|(a, b)| (a - b).abs()).sum();
        if change / normsum < cfg.itml.tol {
            reason = StopReason::Tolerance;
            break;
        }
    }
    report.finish(reason);
    if report.min_eigenvalues.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Optimizer("ITML iterate lost positive definiteness".into()));
    }
    Ok((MetricMatrix::new(m, Form::Full, Provenance::Itml)?, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSelection {
    pub gamma: f64,
    /// `(γ, held-out violations)` for every candidate.
    pub scores: Vec<(f64, usize)>,
}

/// Pick γ from `grid` by `folds`-fold cross-validation on the constraints:
/// fit on all but one fold and count violated constraints in the held-out
/// fold. Fold membership is round-robin. Ties go to the earlier candidate.
pub fn select_itml_gamma(
    x: &DMatrix<f64>,
    similar: &[(usize, usize)],
    dissimilar: &[(usize, usize)],
    cfg: &LearnerConfig,
    grid: &[f64],
    folds: usize,
) -> Result<GammaSelection> {
    if grid.is_empty() || folds < 2 {
        return Err(Error::InvalidArgument("gamma selection needs a grid and >= 2 folds".into()));
    }
    let d = x.ncols();
    let m0 = cfg.itml.prior.clone().unwrap_or_else(|| DMatrix::identity(d, d));
    let (u, l) = match cfg.itml.bounds {
        Some(b) => b,
        None => default_bounds(x, &m0, cfg.itml.bound_quantiles)?,
    };
    let split = |pairs: &[(usize, usize)], f: usize| {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, &p) in pairs.iter().enumerate() {
            if i % folds == f {
                test.push(p);
            } else {
                train.push(p);
            }
        }
        (train, test)
    };
    let mut scores = Vec::with_capacity(grid.len());
    for &gamma in grid {
        let mut local = cfg.clone();
        local.itml.gamma = gamma;
        local.itml.bounds = Some((u, l));
        local.itml.prior = Some(m0.clone());
        let mut violations = 0;
        for f in 0..folds {
            let (s_train, s_test) = split(similar, f);
            let (d_train, d_test) = split(dissimilar, f);
            let (m, _) = fit_itml(x, &s_train, &d_train, &local)?;
            let sq = |&(i, j): &(usize, usize)| {
                let v = (x.row(i) - x.row(j)).transpose();
                squared(m.matrix(), &v)
            };
            violations += s_test.iter().filter(|p| sq(p) > u).count();
            violations += d_test.iter().filter(|p| sq(p) < l).count();
        }
        scores.push((gamma, violations));
    }
    let best = scores
        .iter()
        .enumerate()
        .min_by_key(|(i, (_, v))| (*v, *i))
        .map(|(_, (g, _))| *g)
        .expect("grid is non-empty");
    Ok(GammaSelection { gamma: best, scores })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (DMatrix<f64>, Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let x = DMatrix::from_row_slice(
            6,
            2,
            &[0.0, 0.0, 0.3, 2.0, 0.0, -2.0, 3.0, 1.0, 3.1, -1.0, 2.9, 0.5],
        );
        let similar = vec![(0, 1), (0, 2), (3, 4), (3, 5)];
        let dissimilar = vec![(0, 3), (1, 4), (2, 5)];
        (x, similar, dissimilar)
    }

    #[test]
    fn logdet_of_scaled_identity() {
        for d in [1, 3, 66] {
            let two = DMatrix::<f64>::identity(d, d) * 2.0;
            let got = logdet_divergence(&two, &DMatrix::identity(d, d)).unwrap();
            let want = d as f64 * (1.0 - 2f64.ln());
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert_eq!(logdet_divergence(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3)).unwrap(), 0.0);
        assert!(logdet_divergence(&DMatrix::zeros(2, 2), &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn stays_positive_definite_and_reports() {
        let (x, s, dis) = toy();
        let cfg = LearnerConfig::new(Algorithm::Itml);
        let (m, report) = fit_itml(&x, &s, &dis, &cfg).unwrap();
        assert!(m.min_eigenvalue().unwrap() > 0.0);
        assert!(report.min_eigenvalues.iter().all(|&e| e > 0.0));
        assert_eq!(report.trace.len(), report.iterations);
        assert!(report.trace.iter().all(|v| v.is_finite()));
        assert!(report.converged);
    }

    #[test]
    fn large_gamma_satisfies_feasible_constraints() {
        let (x, s, dis) = toy();
        let mut cfg = LearnerConfig::new(Algorithm::Itml);
        cfg.itml.gamma = 1e8;
        cfg.itml.bounds = Some((1.0, 6.0));
        cfg.itml.tol = 1e-12;
        cfg.max_iter = 20_000;
        let (m, _) = fit_itml(&x, &s, &dis, &cfg).unwrap();
        let sq = |i: usize, j: usize| {
            let v = (x.row(i) - x.row(j)).transpose();
            squared(m.matrix(), &v)
        };
        for &(i, j) in &s {
            assert!(sq(i, j) <= 1.0 + 1e-6, "similar ({i},{j}) = {}", sq(i, j));
        }
        for &(i, j) in &dis {
            assert!(sq(i, j) >= 6.0 - 1e-6, "dissimilar ({i},{j}) = {}", sq(i, j));
        }
    }

    #[test]
    fn empty_constraints_return_prior() {
        let (x, _, _) = toy();
        let mut cfg = LearnerConfig::new(Algorithm::Itml);
        let prior = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        cfg.itml.prior = Some(prior.clone());
        let (m, report) = fit_itml(&x, &[], &[], &cfg).unwrap();
        assert_eq!(m.matrix(), &prior);
        assert_eq!(report.iterations, 0);
    }

    #[test]
    fn collapsed_bounds_error() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let mut cfg = LearnerConfig::new(Algorithm::Itml);
        cfg.itml.bounds = Some((2.0, 2.0));
        assert!(fit_itml(&x, &[(0, 1)], &[(0, 2)], &cfg).is_err());
        let flat = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let cfg = LearnerConfig::new(Algorithm::Itml);
        assert!(matches!(fit_itml(&flat, &[(0, 1)], &[(0, 2)], &cfg), Err(Error::Degenerate(_))));
    }

    #[test]
    fn gamma_selection_picks_from_grid() {
        let (x, s, dis) = toy();
        let cfg = LearnerConfig::new(Algorithm::Itml);
        let sel = select_itml_gamma(&x, &s, &dis, &cfg, &[0.1, 1.0, 10.0], 2).unwrap();
        assert_eq!(sel.scores.len(), 3);
        assert!([0.1, 1.0, 10.0].contains(&sel.gamma));
    }
}
