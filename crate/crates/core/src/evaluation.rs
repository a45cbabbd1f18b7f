//! Output homogeneity of clusterings (CV and MR), boxplot statistics and
//! feature importance from diagonal metrics.

use rayon::prelude::*;

use crate::clustering::{segment_distances, Clustering};
use crate::dataset::{FeatureColumn, FeatureMatrix, OutputVector};
use crate::dendrogram::Dendrogram;
use crate::error::{Error, Result};
use crate::metrics::{pairwise_distances, DistanceSpec, Form, MetricMatrix};
use crate::stats::{mean, percentile_sorted, sample_sd};

/// Sample sd over |mean|; a single value gives 0.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("CV of an empty cluster".into()));
    }
    if values.len() == 1 {
        return Ok(0.0);
    }
    let m = mean(values);
    if m.abs() < 1e-12 {
        return Err(Error::Degenerate(format!("cluster mean {m:e} is zero; CV undefined")));
    }
    Ok(sample_sd(values) / m.abs())
}

fn check_output(clustering: &Clustering, y: &OutputVector) -> Result<()> {
    if clustering.n() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: clustering.n(),
            actual: y.len(),
        });
    }
    Ok(())
}

/// Output values of every cluster, restricted to `rows` when given.
fn cluster_values(clustering: &Clustering, y: &[f64], rows: Option<&[usize]>) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); clustering.k];
    match rows {
        None => {
            for (i, &l) in clustering.labels.iter().enumerate() {
                out[l].push(y[i]);
            }
        }
        Some(rows) => {
            for &i in rows {
                out[clustering.labels[i]].push(y[i]);
            }
        }
    }
    out
}

fn range(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Largest within-cluster output range.
pub fn maximum_range(clustering: &Clustering, y: &OutputVector) -> Result<f64> {
    check_output(clustering, y)?;
    Ok(cluster_values(clustering, y.values(), None)
        .iter()
        .map(|v| range(v))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
}

impl BoxStats {
    /// Quartiles by linear interpolation; whiskers at 1.5 IQR.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("box statistics of no values".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = percentile_sorted(&sorted, 0.25);
        let median = percentile_sorted(&sorted, 0.5);
        let q3 = percentile_sorted(&sorted, 0.75);
        let iqr = q3 - q1;
        Ok(Self {
            q1,
            median,
            q3,
            iqr,
            whisker_lo: q1 - 1.5 * iqr,
            whisker_hi: q3 + 1.5 * iqr,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSummary {
    /// CV of each cluster, by label.
    pub cvs: Vec<f64>,
    pub stats: BoxStats,
}

fn summarize(groups: &[Vec<f64>]) -> Result<CvSummary> {
    let cvs = groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| coefficient_of_variation(g))
        .collect::<Result<Vec<_>>>()?;
    let stats = BoxStats::from_values(&cvs)?;
    Ok(CvSummary { cvs, stats })
}

pub fn cv_summary(clustering: &Clustering, y: &OutputVector) -> Result<CvSummary> {
    check_output(clustering, y)?;
    summarize(&cluster_values(clustering, y.values(), None))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
    /// Weights normalized to sum to 1.
    pub scores: Vec<f64>,
    /// `(feature index, score)`, highest first.
    pub top: Vec<(usize, f64)>,
    /// Features with zero weight.
    pub zero_weight: usize,
}

impl FeatureImportance {
    pub fn to_csv(&self, output: &str) -> String {
        let mut out = format!("# output={output} zero_weight_features={}\n", self.zero_weight);
        out.push_str("output,rank,feature,weight,score\n");
        for (rank, &(i, s)) in self.top.iter().enumerate() {
            out.push_str(&format!("{output},{},{},{},{}\n", rank + 1, self.names[i], self.weights[i], s));
        }
        out
    }
}

pub fn feature_importance(m: &MetricMatrix, columns: &[FeatureColumn], top_m: usize) -> Result<FeatureImportance> {
    if m.form() != Form::Diagonal {
        return Err(Error::InvalidArgument("feature importance needs a diagonal metric".into()));
    }
    if columns.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            actual: columns.len(),
        });
    }
    let weights: Vec<f64> = m.diagonal_weights().iter().map(|w| w.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("all metric weights are zero".into()));
    }
    let scores: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let top = order.into_iter().take(top_m).map(|i| (i, scores[i])).collect();
    Ok(FeatureImportance {
        names: columns.iter().map(|c| c.name.clone()).collect(),
        zero_weight: weights.iter().filter(|&&w| w == 0.0).count(),
        weights,
        scores,
        top,
    })
}

/// A distance to compare, optionally bound to a single output (learned
/// metrics are fit per output).
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub method: String,
    pub output: Option<String>,
    pub spec: DistanceSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Full,
    HeldOut,
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scope::Full => "full",
            Scope::HeldOut => "held-out",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportCell {
    pub method: String,
    pub output: String,
    pub k: usize,
    pub scope: Scope,
    pub clustering: Clustering,
    pub cv: CvSummary,
    pub mr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WinLoss {
    pub method: String,
    pub output: String,
    pub scope: Scope,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationReport {
    pub cells: Vec<ReportCell>,
    /// Median-CV comparison against the `euclidean` method, when present.
    pub win_loss: Vec<WinLoss>,
    /// `(method, output, dendrogram)`; output is empty for shared metrics.
    pub dendrograms: Vec<(String, String, Dendrogram)>,
}

pub const BASELINE: &str = "euclidean";

impl SegmentationReport {
    pub fn cell(&self, method: &str, output: &str, k: usize, scope: Scope) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.output == output && c.k == k && c.scope == scope)
    }

    /// Long form: one row per cluster CV and one per (method, output, k) MR.
    pub fn long_csv(&self) -> String {
        let mut out = String::from("method,output,k,scope,measure,cluster,size,value\n");
        for c in &self.cells {
            let sizes = c.clustering.groups();
            for (l, cv) in c.cv.cvs.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},cv,{},{},{}\n",
                    c.method, c.output, c.k, c.scope, l, sizes[l].len(), cv
                ));
            }
            out.push_str(&format!("{},{},{},{},mr,,,{}\n", c.method, c.output, c.k, c.scope, c.mr));
        }
        out
    }

    pub fn boxplot_csv(&self) -> String {
        let mut out =
            String::from("method,output,k,scope,clusters,q1,median,q3,iqr,whisker_lo,whisker_hi,mr\n");
        for c in &self.cells {
            let s = &c.cv.stats;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                c.method,
                c.output,
                c.k,
                c.scope,
                c.cv.cvs.len(),
                s.q1,
                s.median,
                s.q3,
                s.iqr,
                s.whisker_lo,
                s.whisker_hi,
                c.mr
            ));
        }
        out
    }

    pub fn win_loss_csv(&self) -> String {
        let mut out = format!("# median CV against {BASELINE}; a win is a strictly lower median\n");
        out.push_str("method,output,scope,wins,losses,ties\n");
        for w in &self.win_loss {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                w.method, w.output, w.scope, w.wins, w.losses, w.ties
            ));
        }
        out
    }

    /// `method,output,k,id,cluster` over the full-scope cells.
    pub fn labels_csv(&self, ids: &[String]) -> String {
        let mut out = String::from("method,output,k,id,cluster\n");
        for c in self.cells.iter().filter(|c| c.scope == Scope::Full) {
            for (id, l) in ids.iter().zip(&c.clustering.labels) {
                out.push_str(&format!("{},{},{},{},{}\n", c.method, c.output, c.k, id, l));
            }
        }
        out
    }
}

/// Segment the population under every applicable spec and score each
/// `(method, output, k)` on the full population and, when `held_out` is
/// given, on the held-out rows only.
pub fn compare_metrics(
    x: &FeatureMatrix,
    outputs: &[OutputVector],
    specs: &[MethodSpec],
    ks: &[usize],
    held_out: Option<&[usize]>,
) -> Result<SegmentationReport> {
    if specs.is_empty() || outputs.is_empty() || ks.is_empty() {
        return Err(Error::InvalidArgument("need specs, outputs and ks".into()));
    }
    for s in specs {
        s.spec.validate()?;
        if let Some(o) = &s.output {
            if !outputs.iter().any(|y| &y.name == o) {
                return Err(Error::InvalidArgument(format!("spec bound to unknown output {o}")));
            }
        }
    }
    for y in outputs {
        y.check_aligned(x)?;
    }
    if let Some(rows) = held_out {
        if let Some(&bad) = rows.iter().find(|&&r| r >= x.n()) {
            return Err(Error::IndexOutOfRange { index: bad, size: x.n() });
        }
    }

    let segmented: Vec<(Dendrogram, Vec<Clustering>)> = specs
        .par_iter()
        .map(|s| {
            let d = pairwise_distances(x, &s.spec)?;
            segment_distances(&d, &s.spec.descriptor(), ks)
        })
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for y in outputs {
        for (si, s) in specs.iter().enumerate() {
            if s.output.as_ref().is_some_and(|o| o != &y.name) {
                continue;
            }
            for (ki, &k) in ks.iter().enumerate() {
                jobs.push((y, si, ki, k, Scope::Full));
                if held_out.is_some() {
                    jobs.push((y, si, ki, k, Scope::HeldOut));
                }
            }
        }
    }
    let cells = jobs
        .par_iter()
        .map(|&(y, si, ki, k, scope)| {
            let clustering = segmented[si].1[ki].clone();
            let rows = match scope {
                Scope::Full => None,
                Scope::HeldOut => held_out,
            };
            let groups = cluster_values(&clustering, y.values(), rows);
            let cv = summarize(&groups)?;
            let mr = groups.iter().map(|g| range(g)).fold(0.0, f64::max);
            Ok(ReportCell {
                method: specs[si].method.clone(),
                output: y.name.clone(),
                k,
                scope,
                clustering,
                cv,
                mr,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = SegmentationReport {
        cells,
        win_loss: Vec::new(),
        dendrograms: specs
            .iter()
            .zip(segmented)
            .map(|(s, (dend, _))| (s.method.clone(), s.output.clone().unwrap_or_default(), dend))
            .collect(),
    };
    report.win_loss = win_loss(&report.cells);
    Ok(report)
}

fn win_loss(cells: &[ReportCell]) -> Vec<WinLoss> {
    let mut out: Vec<WinLoss> = Vec::new();
    for c in cells.iter().filter(|c| c.method != BASELINE) {
        let Some(base) = cells
            .iter()
            .find(|b| b.method == BASELINE && b.output == c.output && b.k == c.k && b.scope == c.scope)
        else {
            continue;
        };
        let idx = match out
            .iter()
            .position(|w| w.method == c.method && w.output == c.output && w.scope == c.scope)
        {
            Some(i) => i,
            None => {
                out.push(WinLoss {
                    method: c.method.clone(),
                    output: c.output.clone(),
                    scope: c.scope,
                    wins: 0,
                    losses: 0,
                    ties: 0,
                });
                out.len() - 1
            }
        };
        let (mine, theirs) = (c.cv.stats.median, base.cv.stats.median);
        let w = &mut out[idx];
        if mine < theirs {
            w.wins += 1;
        } else if mine > theirs {
            w.losses += 1;
        } else {
            w.ties += 1;
        }
    }
    out
}
