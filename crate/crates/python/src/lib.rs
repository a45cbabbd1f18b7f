//! Python bindings for the core library.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use aviseg_core::clustering::{average_linkage_cluster, cut};
use aviseg_core::constraints::{identify_constraints, ConstraintParams, Triplet};
use aviseg_core::dataset::{self, FeatureColumn, SyntheticSpec};
use aviseg_core::dendrogram::Dendrogram;
use aviseg_core::learners::{self, Algorithm, LearnerConfig};
use aviseg_core::metrics::{self, DistanceMatrix, DistanceSpec, Form, Provenance};
use aviseg_core::pipeline::{self, PipelineConfig};
use aviseg_core::{evaluation, prototypes, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Row lists to a dense matrix; every row must have the same length.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let d = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != d) {
        return Err(format!("row {bad} has {} values, expected {d}", rows[bad].len()));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    rows_to_matrix(rows).map_err(PyValueError::new_err)
}

fn distance_matrix(rows: &[Vec<f64>]) -> PyResult<DistanceMatrix> {
    DistanceMatrix::new(matrix(rows)?).map_err(err)
}

fn merges(dend: &Dendrogram) -> Vec<(usize, usize, f64, Option<usize>)> {
    dend.merges().iter().map(|m| (m.a, m.b, m.height, m.prototype)).collect()
}

/// Encoded feature table.
#[pyclass(name = "FeatureMatrix", module = "aviseg", from_py_object)]
#[derive(Clone)]
struct PyFeatureMatrix {
    inner: dataset::FeatureMatrix,
}

#[pymethods]
impl PyFeatureMatrix {
    #[new]
    fn new(ids: Vec<String>, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = dataset::FeatureMatrix::from_matrix(ids, matrix(&rows)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.columns().iter().map(|c| c.name.clone()).collect()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.x())
    }

    fn constant_columns(&self) -> Vec<usize> {
        self.inner.constant_columns()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        format!("FeatureMatrix(n={}, d={})", self.inner.n(), self.inner.d())
    }
}

/// Symmetric PSD weight matrix of a generalized Mahalanobis distance.
#[pyclass(name = "MetricMatrix", module = "aviseg", from_py_object)]
#[derive(Clone)]
struct PyMetricMatrix {
    inner: metrics::MetricMatrix,
}

#[pymethods]
impl PyMetricMatrix {
    #[new]
    #[pyo3(signature = (rows, diagonal=false))]
    fn new(rows: Vec<Vec<f64>>, diagonal: bool) -> PyResult<Self> {
        let form = if diagonal { Form::Diagonal } else { Form::Full };
        let inner = metrics::MetricMatrix::new(matrix(&rows)?, form, Provenance::Identity).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn identity(d: usize) -> Self {
        Self {
            inner: metrics::MetricMatrix::identity(d),
        }
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: metrics::MetricMatrix::from_text(text).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.matrix())
    }

    #[getter]
    fn form(&self) -> String {
        self.inner.form().to_string()
    }

    #[getter]
    fn provenance(&self) -> String {
        self.inner.provenance().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn diagonal(&self) -> Vec<f64> {
        self.inner.diagonal_weights()
    }

    fn min_eigenvalue(&self) -> PyResult<f64> {
        self.inner.min_eigenvalue().map_err(err)
    }

    fn distance(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        metrics::mahalanobis_distance(&x, &y, &self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "MetricMatrix(dim={}, form={}, provenance={})",
            self.inner.dim(),
            self.inner.form(),
            self.inner.provenance()
        )
    }
}

/// Load, optionally engineer, and encode a feature file.
#[pyfunction]
#[pyo3(signature = (features, schema, engineer=true))]
fn encode_file(features: PathBuf, schema: PathBuf, engineer: bool) -> PyResult<PyFeatureMatrix> {
    let schema = dataset::Schema::load(schema).map_err(err)?;
    let mut raw = dataset::load_raw(features, &schema).map_err(err)?;
    if engineer {
        let feats = dataset::available_features(&raw);
        if !feats.is_empty() {
            raw = dataset::engineer_features(&raw, &feats).map_err(err)?;
        }
    }
    Ok(PyFeatureMatrix {
        inner: dataset::encode(&raw).map_err(err)?,
    })
}

/// Synthetic population: `(features, y)`.
#[pyfunction]
#[pyo3(signature = (n, d, signal, noise_sd=0.1, intercept=0.0, seed=0))]
fn generate_synthetic(
    n: usize,
    d: usize,
    signal: Vec<(usize, f64)>,
    noise_sd: f64,
    intercept: f64,
    seed: u64,
) -> PyResult<(PyFeatureMatrix, Vec<f64>)> {
    let spec = SyntheticSpec::new(n, d, signal, noise_sd, seed).with_intercept(intercept);
    let (fm, y) = dataset::generate_synthetic(&spec).map_err(err)?;
    Ok((PyFeatureMatrix { inner: fm }, y.values().to_vec()))
}

/// Pairwise distances between rows: Minkowski of order `p` (use
/// `float("inf")` for Chebyshev), or Mahalanobis when `metric` is given.
#[pyfunction]
#[pyo3(signature = (rows, metric=None, p=2.0))]
fn pairwise_distances(rows: Vec<Vec<f64>>, metric: Option<PyMetricMatrix>, p: f64) -> PyResult<Vec<Vec<f64>>> {
    let spec = match metric {
        Some(m) => DistanceSpec::Mahalanobis(m.inner),
        None => DistanceSpec::Minkowski(p),
    };
    let d = metrics::pairwise_distances_rows(&matrix(&rows)?, &spec).map_err(err)?;
    Ok(matrix_to_rows(d.matrix()))
}

/// Minimax-linkage merges as `(a, b, height, prototype)`.
#[pyfunction]
fn minimax_linkage(distances: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize, f64, Option<usize>)>> {
    let d = distance_matrix(&distances)?;
    Ok(merges(&prototypes::minimax_linkage_cluster(&d).map_err(err)?))
}

/// `k` minimax prototypes and their covering radius.
#[pyfunction]
fn select_prototypes(distances: Vec<Vec<f64>>, k: usize) -> PyResult<(Vec<usize>, f64)> {
    let d = distance_matrix(&distances)?;
    let dend = prototypes::minimax_linkage_cluster(&d).map_err(err)?;
    let set = prototypes::select_prototypes(&dend, k, &d).map_err(err)?;
    Ok((set.prototypes, set.radius))
}

/// Similar pairs, dissimilar pairs and triplets for one output.
#[pyfunction]
#[pyo3(signature = (rows, y, tail=0.10, rho_micro=2, rho_macro=5))]
fn find_constraints<'py>(
    py: Python<'py>,
    rows: Vec<Vec<f64>>,
    y: Vec<f64>,
    tail: f64,
    rho_micro: usize,
    rho_macro: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let params = ConstraintParams {
        tail,
        rho_micro,
        rho_macro,
    };
    let cs = identify_constraints(&matrix(&rows)?, &y, &params).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("similar", cs.similar.clone())?;
    out.set_item("dissimilar", cs.dissimilar.clone())?;
    let triplets: Vec<(usize, usize, usize)> = cs.triplet_list().iter().map(|t| (t.anchor, t.near, t.far)).collect();
    out.set_item("triplets", triplets)?;
    out.set_item("f_low", cs.f_low)?;
    out.set_item("f_high", cs.f_high)?;
    Ok(out)
}

/// Fit `algorithm` ("mmc", "itml" or "lmnn"); returns the metric and a
/// report dict.
#[pyfunction]
#[pyo3(signature = (algorithm, rows, similar=Vec::new(), dissimilar=Vec::new(), triplets=Vec::new(), max_iter=1000, gamma=1.0, mu=0.5))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    algorithm: &str,
    rows: Vec<Vec<f64>>,
    similar: Vec<(usize, usize)>,
    dissimilar: Vec<(usize, usize)>,
    triplets: Vec<(usize, usize, usize)>,
    max_iter: usize,
    gamma: f64,
    mu: f64,
) -> PyResult<(PyMetricMatrix, Bound<'py, PyDict>)> {
    let alg: Algorithm = algorithm.parse().map_err(err)?;
    let x = matrix(&rows)?;
    let mut cfg = LearnerConfig::new(alg);
    cfg.max_iter = max_iter;
    cfg.itml.gamma = gamma;
    cfg.lmnn.mu = mu;
    let triplets: Vec<Triplet> = triplets
        .into_iter()
        .map(|(anchor, near, far)| Triplet { anchor, near, far })
        .collect();
    let (m, report) = py
        .detach(|| match alg {
            Algorithm::Mmc => learners::fit_mmc(&x, &similar, &dissimilar, &cfg),
            Algorithm::Itml => learners::fit_itml(&x, &similar, &dissimilar, &cfg),
            Algorithm::Lmnn => learners::fit_lmnn(&x, &similar, &triplets, &cfg),
        })
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("objective", report.objective)?;
    out.set_item("iterations", report.iterations)?;
    out.set_item("converged", report.converged)?;
    out.set_item("stop_reason", report.stop_reason.to_string())?;
    out.set_item("trace", report.trace.clone())?;
    Ok((PyMetricMatrix { inner: m }, out))
}

/// Average-linkage merges as `(a, b, height, None)`.
#[pyfunction]
fn average_linkage(distances: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize, f64, Option<usize>)>> {
    let d = distance_matrix(&distances)?;
    Ok(merges(&average_linkage_cluster(&d).map_err(err)?))
}

/// Cluster labels for a `k`-cluster average-linkage cut.
#[pyfunction]
fn segment(distances: Vec<Vec<f64>>, k: usize) -> PyResult<Vec<usize>> {
    let d = distance_matrix(&distances)?;
    let dend = average_linkage_cluster(&d).map_err(err)?;
    Ok(cut(&dend, k, "python").map_err(err)?.labels)
}

#[pyfunction]
fn coefficient_of_variation(values: Vec<f64>) -> PyResult<f64> {
    evaluation::coefficient_of_variation(&values).map_err(err)
}

/// Largest within-cluster range of `y` under `labels`.
#[pyfunction]
fn maximum_range(labels: Vec<usize>, y: Vec<f64>) -> PyResult<f64> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups.retain(|g| !g.is_empty());
    let c = aviseg_core::clustering::Clustering::from_groups(groups, labels.len(), "python").map_err(err)?;
    let ids = (0..y.len()).map(|i| i.to_string()).collect();
    let y = dataset::OutputVector::new("y", "", ids, y).map_err(err)?;
    evaluation::maximum_range(&c, &y).map_err(err)
}

/// `(name, score)` of the `top_m` heaviest features of a diagonal metric.
#[pyfunction]
fn feature_importance(metric: PyMetricMatrix, names: Vec<String>, top_m: usize) -> PyResult<Vec<(String, f64)>> {
    let columns: Vec<FeatureColumn> = names
        .iter()
        .map(|n| FeatureColumn {
            name: n.clone(),
            source: n.clone(),
            category: None,
            constant: false,
        })
        .collect();
    let fi = evaluation::feature_importance(&metric.inner, &columns, top_m).map_err(err)?;
    Ok(fi.top.iter().map(|&(i, s)| (names[i].clone(), s)).collect())
}

/// Write a synthetic population and runnable config into `directory`;
/// returns the config path.
#[pyfunction]
#[pyo3(signature = (directory, n=200, d=20, signal=vec![(0, 1.0), (1, 1.0), (2, 1.0)], noise_sd=0.1, intercept=10.0, seed=0))]
fn write_synthetic(
    directory: PathBuf,
    n: usize,
    d: usize,
    signal: Vec<(usize, f64)>,
    noise_sd: f64,
    intercept: f64,
    seed: u64,
) -> PyResult<PathBuf> {
    let spec = SyntheticSpec::new(n, d, signal, noise_sd, seed).with_intercept(intercept);
    pipeline::write_synthetic(&spec, directory).map_err(err)
}

/// Run the full pipeline from a config file; returns the written files.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None))]
fn run_pipeline(py: Python<'_>, config: PathBuf, out_dir: Option<PathBuf>) -> PyResult<Vec<PathBuf>> {
    let mut cfg = PipelineConfig::load(&config).map_err(err)?;
    if let Some(o) = out_dir {
        cfg.paths.out_dir = o;
    }
    let outcome = py.detach(|| pipeline::run_pipeline(&cfg)).map_err(err)?;
    Ok(outcome.files)
}

#[pymodule]
fn aviseg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFeatureMatrix>()?;
    m.add_class::<PyMetricMatrix>()?;
    m.add_function(wrap_pyfunction!(encode_file, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_distances, m)?)?;
    m.add_function(wrap_pyfunction!(minimax_linkage, m)?)?;
    m.add_function(wrap_pyfunction!(select_prototypes, m)?)?;
    m.add_function(wrap_pyfunction!(find_constraints, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(average_linkage, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(coefficient_of_variation, m)?)?;
    m.add_function(wrap_pyfunction!(maximum_range, m)?)?;
    m.add_function(wrap_pyfunction!(feature_importance, m)?)?;
    m.add_function(wrap_pyfunction!(write_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let m = rows_to_matrix(&rows).unwrap();
        assert_eq!(m[(2, 1)], 6.0);
        assert_eq!(matrix_to_rows(&m), rows);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(rows_to_matrix(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert_eq!(rows_to_matrix(&[]).unwrap().nrows(), 0);
    }
}
