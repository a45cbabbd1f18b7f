//! Diagonal MMC: minimize `Σ_S d²` keeping `Σ_D d >= c`, solved through the
//! equivalent unconstrained problem `g(w) = s·w - ln Σ_D sqrt(a·w)` over
//! `w >= 0` and rescaled at the end.

use nalgebra::{DMatrix, DVector};

use super::{check_pairs, Algorithm, FitReport, LearnerConfig, StopReason};
use crate::error::{Error, Result};
use crate::metrics::{MetricMatrix, Provenance};

struct Problem {
    /// `Σ_S (x_i - x_j)²`, per feature.
    s: DVector<f64>,
    /// Squared differences of each dissimilar pair, one row per pair.
    a: DMatrix<f64>,
}

const FLOOR: f64 = 1e-12;
const HESSIAN_RIDGE: f64 = 1e-6;
const MIN_STEP: f64 = 1e-14;

impl Problem {
    fn new(x: &DMatrix<f64>, similar: &[(usize, usize)], dissimilar: &[(usize, usize)]) -> Self {
        let d = x.ncols();
        let mut s = DVector::zeros(d);
        for &(i, j) in similar {
            for c in 0..d {
                let v = x[(i, c)] - x[(j, c)];
                s[c] += v * v;
            }
        }
        let a = DMatrix::from_fn(dissimilar.len(), d, |r, c| {
            let (i, j) = dissimilar[r];
            let v = x[(i, c)] - x[(j, c)];
            v * v
        });
        Self { s, a }
    }

    fn dissimilar_sum(&self, w: &DVector<f64>) -> f64 {
        (&self.a * w).iter().map(|q| q.max(0.0).sqrt()).sum()
    }

    fn objective(&self, w: &DVector<f64>) -> f64 {
        let h = self.dissimilar_sum(w);
        if h <= 0.0 {
            return f64::INFINITY;
        }
        self.s.dot(w) - h.ln()
    }

    fn gradient_hessian(&self, w: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = w.len();
        let q = &self.a * w;
        let mut h = 0.0;
        let mut dh = DVector::zeros(d);
        let mut curv = DMatrix::zeros(d, d);
        for (k, &qk) in q.iter().enumerate() {
            let qk = qk.max(FLOOR);
            let root = qk.sqrt();
            h += root;
            let row = self.a.row(k).transpose();
            dh.axpy(0.5 / root, &row, 1.0);
            curv.ger(0.25 / (qk * root), &row, &row, 1.0);
        }
        let grad = &self.s - &dh / h;
        let mut hess = curv / h + (&dh * dh.transpose()) / (h * h);
        for i in 0..d {
            hess[(i, i)] += HESSIAN_RIDGE;
        }
        (grad, hess)
    }
}

/// Unconstrained MMC objective for diagonal weights `w` on the given pairs.
pub fn mmc_objective(
    x: &DMatrix<f64>,
    similar: &[(usize, usize)],
    dissimilar: &[(usize, usize)],
    w: &[f64],
) -> Result<f64> {
    check_pairs(x.nrows(), similar)?;
    check_pairs(x.nrows(), dissimilar)?;
    if w.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            actual: w.len(),
        });
    }
    Ok(Problem::new(x, similar, dissimilar).objective(&DVector::from_column_slice(w)))
}

fn project(w: DVector<f64>) -> DVector<f64> {
    w.map(|v| v.max(0.0))
}

/// Backtracking along the projected arc `P(w - t·dir)`.
fn search(
    p: &Problem,
    w: &DVector<f64>,
    dir: &DVector<f64>,
    current: f64,
) -> Option<(DVector<f64>, f64)> {
    let mut t = 1.0;
    while t > MIN_STEP {
        let cand = project(w - dir * t);
        let val = p.objective(&cand);
        if val < current {
            return Some((cand, val));
        }
        t *= 0.5;
    }
    None
}

pub fn fit_mmc(
    x: &DMatrix<f64>,
    similar: &[(usize, usize)],
    dissimilar: &[(usize, usize)],
    cfg: &LearnerConfig,
) -> Result<(MetricMatrix, FitReport)> {
    cfg.validate()?;
    check_pairs(x.nrows(), similar)?;
    check_pairs(x.nrows(), dissimilar)?;
    if similar.is_empty() || dissimilar.is_empty() {
        return Err(Error::Degenerate("MMC needs similar and dissimilar pairs".into()));
    }
    let p = Problem::new(x, similar, dissimilar);
    if p.s.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("all similar pairs coincide".into()));
    }
    if p.a.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("all dissimilar pairs coincide".into()));
    }

    let d = x.ncols();
    let mut w = DVector::from_element(d, 1.0);
    let mut value = p.objective(&w);
    let mut report = FitReport::new(Algorithm::Mmc, value);
    let mut stalled = 0;
    let mut reason = StopReason::MaxIterations;

    for _ in 0..cfg.max_iter {
        let (grad, hess) = p.gradient_hessian(&w);
        // Variables pinned at zero with an outward gradient stay fixed.
        let free: Vec<bool> = (0..d).map(|i| !(w[i] <= 0.0 && grad[i] > 0.0)).collect();
        if (0..d).all(|i| !free[i] || grad[i].abs() <= FLOOR) {
            reason = StopReason::Stationary;
            break;
        }
        let mut reduced = hess.clone();
        for i in 0..d {
            for j in 0..d {
                if !free[i] || !free[j] {
                    reduced[(i, j)] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        let masked_grad = DVector::from_fn(d, |i, _| if free[i] { grad[i] } else { 0.0 });
        let newton = reduced.cholesky().map(|c| c.solve(&masked_grad));
        let step = newton
            .and_then(|dir| search(&p, &w, &dir, value))
            .or_else(|| {
                let scale = 1.0 / grad.norm().max(FLOOR) * w.norm().max(1.0);
                search(&p, &w, &(&grad * scale), value)
            });
        let Some((next, next_value)) = step else {
            reason = StopReason::StepCollapse;
            break;
        };
        let change = (value - next_value).abs() / value.abs().max(1.0);
        w = next;
        value = next_value;
        report.trace.push(value);
        if cfg.record_iterates {
            report.iterates.push(DMatrix::from_diagonal(&w));
        }
        stalled = if change < cfg.tol { stalled + 1 } else { 0 };
        if stalled >= cfg.patience {
            reason = StopReason::Tolerance;
            break;
        }
    }

    let floor = cfg.mmc.dissimilar_floor;
    let total = p.dissimilar_sum(&w);
    if total <= 0.0 {
        return Err(Error::Optimizer("MMC collapsed every dissimilar distance".into()));
    }
    // Distances scale with sqrt(w), so w scales by (c / total)².
    let mut factor = (floor / total).powi(2);
    let mut scaled = &w * factor;
    while p.dissimilar_sum(&scaled) < floor {
        factor *= 1.0 + 1e-12;
        scaled = &w * factor;
    }
    report
        .notes
        .push(format!("weights rescaled by {factor} so the dissimilar distance sum is {floor}"));
    report.finish(reason);
    let m = MetricMatrix::from_diagonal(scaled.as_slice(), Provenance::Mmc)?;
    Ok((m, report))
}
