//! Metric learners: diagonal MMC, ITML and a triplet-driven LMNN.
//!
//! Every learner returns a [`MetricMatrix`] that satisfies the symmetry and PSD
//! invariants together with a [`FitReport`] describing the optimization.

mod itml;
mod lmnn;
mod mmc;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

pub use itml::{default_bounds, fit_itml, logdet_divergence, select_itml_gamma, GammaSelection};
pub use lmnn::{fit_lmnn, lmnn_objective, pull_pairs};
pub use mmc::{fit_mmc, mmc_objective};

use crate::constraints::{ConstraintSets, Triplet};
use crate::error::{Error, Result};
use crate::metrics::{mahalanobis_sq, MetricMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Mmc,
    Itml,
    Lmnn,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Mmc => "mmc",
            Algorithm::Itml => "itml",
            Algorithm::Lmnn => "lmnn",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmc" => Ok(Algorithm::Mmc),
            "itml" => Ok(Algorithm::Itml),
            "lmnn" => Ok(Algorithm::Lmnn),
            _ => Err(Error::InvalidArgument(format!("unknown learner {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmcParams {
    /// Right-hand side `c` of the dissimilar-sum constraint.
    pub dissimilar_floor: f64,
}

impl Default for MmcParams {
    fn default() -> Self {
        Self {
            dissimilar_floor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItmlParams {
    /// Slack trade-off γ.
    pub gamma: f64,
    /// `(u, l)`; derived from prior distances when `None`.
    pub bounds: Option<(f64, f64)>,
    /// Quantiles of prior squared distances used for default bounds.
    pub bound_quantiles: (f64, f64),
    /// Prior `M0`; identity when `None`.
    pub prior: Option<DMatrix<f64>>,
    /// Threshold on the relative change of the dual variables per cycle.
    pub tol: f64,
}

impl Default for ItmlParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            bounds: None,
            bound_quantiles: (0.05, 0.95),
            prior: None,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmnnParams {
    /// Pull/push trade-off μ in `[0, 1]`.
    pub mu: f64,
    /// First trial step; chosen from the gradient norm when `None`.
    pub initial_step: Option<f64>,
    /// Step growth after an accepted step.
    pub grow: f64,
    /// Step shrink after a rejected trial.
    pub shrink: f64,
}

impl Default for LmnnParams {
    fn default() -> Self {
        Self {
            mu: 0.5,
            initial_step: None,
            grow: 1.2,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub max_iter: usize,
    /// Relative objective change treated as stalled.
    pub tol: f64,
    /// Consecutive stalled steps before stopping.
    pub patience: usize,
    pub mmc: MmcParams,
    pub itml: ItmlParams,
    pub lmnn: LmnnParams,
    /// Keep every accepted iterate in the report.
    pub record_iterates: bool,
    /// Reserved; the solvers are deterministic.
    pub seed: u64,
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            max_iter: 1000,
            tol: 1e-6,
            patience: 3,
            mmc: MmcParams::default(),
            itml: ItmlParams::default(),
            lmnn: LmnnParams::default(),
            record_iterates: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.itml.gamma > 0.0) {
            return Err(Error::Config(format!("ITML gamma {} must be > 0", self.itml.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lmnn.mu) {
            return Err(Error::Config(format!("LMNN mu {} outside [0, 1]", self.lmnn.mu)));
        }
        if let Some((u, l)) = self.itml.bounds {
            if !(u < l) {
                return Err(Error::Config(format!("ITML bounds need u < l, got u={u} l={l}")));
            }
        }
        if !(self.lmnn.shrink > 0.0 && self.lmnn.shrink < 1.0 && self.lmnn.grow >= 1.0) {
            return Err(Error::Config("LMNN step factors need 0 < shrink < 1 <= grow".into()));
        }
        if !(self.mmc.dissimilar_floor > 0.0) {
            return Err(Error::Config("MMC dissimilar floor must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Objective change below tolerance for `patience` consecutive steps.
    Tolerance,
    /// No descent step found with a non-negligible step size.
    StepCollapse,
    /// Zero (sub)gradient at the current iterate.
    Stationary,
    /// No constraints to enforce.
    NoConstraints,
    MaxIterations,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Tolerance => "tolerance",
            StopReason::StepCollapse => "step-collapse",
            StopReason::Stationary => "stationary",
            StopReason::NoConstraints => "no-constraints",
            StopReason::MaxIterations => "max-iterations",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub algorithm: Algorithm,
    pub initial_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Objective after each iteration; `trace.len() == iterations`.
    pub trace: Vec<f64>,
    /// Smallest eigenvalue after each iteration (ITML only).
    pub min_eigenvalues: Vec<f64>,
    /// Accepted iterates when `record_iterates` is set.
    pub iterates: Vec<DMatrix<f64>>,
    pub violations: Option<ViolationReport>,
    pub notes: Vec<String>,
}

impl FitReport {
    fn new(algorithm: Algorithm, initial_objective: f64) -> Self {
        Self {
            algorithm,
            initial_objective,
            objective: initial_objective,
            iterations: 0,
            converged: false,
            stop_reason: StopReason::MaxIterations,
            trace: Vec::new(),
            min_eigenvalues: Vec::new(),
            iterates: Vec::new(),
            violations: None,
            notes: Vec::new(),
        }
    }

    fn finish(&mut self, reason: StopReason) {
        self.stop_reason = reason;
        self.converged = reason != StopReason::MaxIterations;
        self.iterations = self.trace.len();
        if let Some(&last) = self.trace.last() {
            self.objective = last;
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "algorithm {}\ninitial_objective {}\nobjective {}\niterations {}\nconverged {}\nstop_reason {}\n",
            self.algorithm,
            self.initial_objective,
            self.objective,
            self.iterations,
            self.converged,
            self.stop_reason
        );
        if let Some(v) = &self.violations {
            out.push_str(&format!(
                "violations similar={} dissimilar={} triplet={} lmnn_loss={}\n",
                v.similar, v.dissimilar, v.triplet, v.lmnn_loss
            ));
        }
        for note in &self.notes {
            out.push_str(&format!("note {note}\n"));
        }
        out.push_str("# iteration objective\n");
        for (i, v) in self.trace.iter().enumerate() {
            out.push_str(&format!("{} {}\n", i + 1, v));
        }
        out
    }
}

/// Similar-pair upper bound `u` and dissimilar-pair lower bound `l` on
/// squared distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintBounds {
    pub upper: f64,
    pub lower: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    /// Similar pairs with `d² > u`.
    pub similar: usize,
    /// Dissimilar pairs with `d² < l`.
    pub dissimilar: usize,
    /// Triplets with a positive unit-margin hinge.
    pub triplet: usize,
    /// Pull/push loss at trade-off `mu`.
    pub lmnn_loss: f64,
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

/// Count violated constraints one by one and evaluate the pull/push loss.
/// The pull term runs over `similar` together with the `(anchor, near)` leg
/// of every triplet.
pub fn evaluate_constraints(
    m: &MetricMatrix,
    x: &DMatrix<f64>,
    similar: &[(usize, usize)],
    dissimilar: &[(usize, usize)],
    triplets: &[Triplet],
    bounds: ConstraintBounds,
    mu: f64,
) -> Result<ViolationReport> {
    check_pairs(x.nrows(), similar)?;
    check_pairs(x.nrows(), dissimilar)?;
    check_triplets(x.nrows(), triplets)?;
    let sq = |i: usize, j: usize| mahalanobis_sq(&row(x, i), &row(x, j), m);
    let mut report = ViolationReport {
        similar: 0,
        dissimilar: 0,
        triplet: 0,
        lmnn_loss: 0.0,
    };
    for &(i, j) in similar {
        if sq(i, j)? > bounds.upper {
            report.similar += 1;
        }
    }
    for &(i, j) in dissimilar {
        if sq(i, j)? < bounds.lower {
            report.dissimilar += 1;
        }
    }
    let mut pull = 0.0;
    for (i, j) in pull_pairs(similar, triplets) {
        pull += sq(i, j)?;
    }
    let mut push = 0.0;
    for t in triplets {
        let h = 1.0 + sq(t.anchor, t.near)? - sq(t.anchor, t.far)?;
        if h > 0.0 {
            report.triplet += 1;
            push += h;
        }
    }
    report.lmnn_loss = (1.0 - mu) * pull + mu * push;
    Ok(report)
}

pub(crate) fn check_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<()> {
    for &(i, j) in pairs {
        if i >= n || j >= n {
            return Err(Error::IndexOutOfRange {
                index: i.max(j),
                size: n,
            });
        }
    }
    Ok(())
}

pub(crate) fn check_triplets(n: usize, triplets: &[Triplet]) -> Result<()> {
    for t in triplets {
        let worst = t.anchor.max(t.near).max(t.far);
        if worst >= n {
            return Err(Error::IndexOutOfRange {
                index: worst,
                size: n,
            });
        }
    }
    Ok(())
}

/// Difference vectors `x_i - x_j` for each pair, stacked as rows.
pub(crate) fn pair_differences(x: &DMatrix<f64>, pairs: &[(usize, usize)]) -> DMatrix<f64> {
    DMatrix::from_fn(pairs.len(), x.ncols(), |r, c| {
        let (i, j) = pairs[r];
        x[(i, c)] - x[(j, c)]
    })
}

/// Fit the learner named by `cfg.algorithm` on a constraint set.
pub fn fit(
    x: &DMatrix<f64>,
    constraints: &ConstraintSets,
    cfg: &LearnerConfig,
) -> Result<(MetricMatrix, FitReport)> {
    match cfg.algorithm {
        Algorithm::Mmc => fit_mmc(x, &constraints.similar, &constraints.dissimilar, cfg),
        Algorithm::Itml => fit_itml(x, &constraints.similar, &constraints.dissimilar, cfg),
        Algorithm::Lmnn => fit_lmnn(x, &constraints.similar, &constraints.triplet_list(), cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Form, Provenance};

    fn points() -> DMatrix<f64> {
        DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 3.0, 5.0, 5.0])
    }

    #[test]
    fn identity_on_satisfied_sets_has_no_violations() {
        let x = points();
        let report = evaluate_constraints(
            &MetricMatrix::identity(2),
            &x,
            &[(0, 1)],
            &[(0, 3)],
            &[Triplet { anchor: 0, near: 1, far: 3 }],
            ConstraintBounds { upper: 2.0, lower: 10.0 },
            0.5,
        )
        .unwrap();
        assert_eq!((report.similar, report.dissimilar, report.triplet), (0, 0, 0));
        // pull over (0,1) only: d² = 1
        assert_eq!(report.lmnn_loss, 0.5);
    }

    #[test]
    fn zero_metric_violates_everything_separating() {
        let x = points();
        let zero = MetricMatrix::new(DMatrix::zeros(2, 2), Form::Full, Provenance::Lmnn).unwrap();
        let report = evaluate_constraints(
            &zero,
            &x,
            &[(0, 1)],
            &[(0, 3), (1, 2)],
            &[Triplet { anchor: 0, near: 1, far: 3 }, Triplet { anchor: 2, near: 1, far: 0 }],
            ConstraintBounds { upper: 2.0, lower: 10.0 },
            0.5,
        )
        .unwrap();
        assert_eq!(report.dissimilar, 2);
        assert_eq!(report.triplet, 2);
        assert_eq!(report.similar, 0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = LearnerConfig::new(Algorithm::Itml);
        cfg.itml.gamma = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = LearnerConfig::new(Algorithm::Lmnn);
        cfg.lmnn.mu = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = LearnerConfig::new(Algorithm::Itml);
        cfg.itml.bounds = Some((3.0, 1.0));
        assert!(cfg.validate().is_err());
        assert!(LearnerConfig::new(Algorithm::Mmc).validate().is_ok());
    }
}
