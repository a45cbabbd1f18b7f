//! Distance metrics: the Minkowski family and generalized Mahalanobis
//! distances `d_M(x, y) = sqrt((x - y)' M (x - y))` for a PSD weight matrix `M`,
//! plus the eigendecomposition utilities the learners share.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// Largest tolerated asymmetry `|M_ij - M_ji|`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Smallest tolerated eigenvalue of a PSD metric matrix.
pub const PSD_TOL: f64 = -1e-8;
/// Quadratic forms above this (negative) value are clamped to zero.
pub const QUADRATIC_CLAMP: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Form {
    Full,
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Identity,
    CovarianceInverse,
    Mmc,
    Itml,
    Lmnn,
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Form::Full => "full",
            Form::Diagonal => "diagonal",
        })
    }
}

impl FromStr for Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Form::Full),
            "diagonal" => Ok(Form::Diagonal),
            _ => Err(Error::InvalidArgument(format!("unknown metric form {s:?}"))),
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Identity => "identity",
            Provenance::CovarianceInverse => "covariance-inverse",
            Provenance::Mmc => "mmc",
            Provenance::Itml => "itml",
            Provenance::Lmnn => "lmnn",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Provenance::Identity),
            "covariance-inverse" => Ok(Provenance::CovarianceInverse),
            "mmc" => Ok(Provenance::Mmc),
            "itml" => Ok(Provenance::Itml),
            "lmnn" => Ok(Provenance::Lmnn),
            _ => Err(Error::InvalidArgument(format!("unknown provenance {s:?}"))),
        }
    }
}

/// Symmetric PSD `d x d` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    m: DMatrix<f64>,
    form: Form,
    provenance: Provenance,
}

impl MetricMatrix {
    /// Validate symmetry, positive semi-definiteness and (for the diagonal
    /// form) exactly-zero off-diagonal entries.
    pub fn new(m: DMatrix<f64>, form: Form, provenance: Provenance) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidMetric(format!(
                "matrix is {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let d = m.nrows();
        for i in 0..d {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() >= SYMMETRY_TOL {
                    return Err(Error::InvalidMetric(format!("asymmetric at ({i},{j})")));
                }
                if form == Form::Diagonal && (m[(i, j)] != 0.0 || m[(j, i)] != 0.0) {
                    return Err(Error::InvalidMetric(format!(
                        "diagonal form has off-diagonal entry at ({i},{j})"
                    )));
                }
            }
        }
        let min_eig = match form {
            Form::Diagonal => m.diagonal().iter().copied().fold(f64::INFINITY, f64::min),
            Form::Full => min_eigenvalue(&m)?,
        };
        if d > 0 && min_eig < PSD_TOL {
            return Err(Error::InvalidMetric(format!(
                "smallest eigenvalue {min_eig:e} below {PSD_TOL:e}"
            )));
        }
        Ok(Self { m, form, provenance })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            m: DMatrix::identity(d, d),
            form: Form::Diagonal,
            provenance: Provenance::Identity,
        }
    }

    pub fn from_diagonal(weights: &[f64], provenance: Provenance) -> Result<Self> {
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(weights));
        Self::new(m, Form::Diagonal, provenance)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn diagonal_weights(&self) -> Vec<f64> {
        self.m.diagonal().iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        min_eigenvalue(&self.m)
    }

    /// `c * M`; distances scale by `sqrt(c)`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.m * c, self.form, self.provenance)
    }

    /// A factor `L` with `M = L' L`, built from the eigendecomposition.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        let eig = symmetric_eigen(&self.m)?;
        let d = self.dim();
        let mut l = DMatrix::zeros(d, d);
        for k in 0..d {
            let s = eig.eigenvalues[k].max(0.0).sqrt();
            for j in 0..d {
                l[(k, j)] = s * eig.eigenvectors[(j, k)];
            }
        }
        Ok(l)
    }

    /// Plain-text form: a header line `d form provenance`, then `d` rows of
    /// `d` numbers. Numbers use the shortest representation that parses back
    /// to the same `f64`.
    pub fn to_text(&self) -> String {
        let d = self.dim();
        let mut out = format!("{} {} {}\n", d, self.form, self.provenance);
        for i in 0..d {
            let row: Vec<String> = (0..d).map(|j| self.m[(i, j)].to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty metric file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::InvalidArgument(format!("bad metric header {header:?}")));
        }
        let d: usize = parts[0]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad dimension {:?}", parts[0])))?;
        let form: Form = parts[1].parse()?;
        let provenance: Provenance = parts[2].parse()?;
        let mut data = Vec::with_capacity(d * d);
        for (i, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("bad number {t:?}")))
                })
                .collect::<Result<_>>()?;
            if row.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} entries, expected {d}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        if data.len() != d * d {
            return Err(Error::InvalidArgument(format!(
                "expected {d} rows, got {}",
                data.len() / d.max(1)
            )));
        }
        Self::new(DMatrix::from_row_slice(d, d, &data), form, provenance)
    }
}

fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Optimizer("eigendecomposition did not converge".into()))
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = symmetric_eigen(a)?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Eigenvalues (ascending) and matching unit eigenvectors (as columns).
pub fn sorted_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let eig = symmetric_eigen(a)?;
    let d = a.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let d = a.nrows();
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Reconstruct `V f(Λ) V'` and symmetrize exactly.
fn reconstruct(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let vals = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, k| v[(i, k)] * vals[k]);
    let mut out = scaled * v.transpose();
    symmetrize(&mut out);
    out
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues clamped to 0.
pub fn psd_projection(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    let eig = symmetric_eigen(a)?;
    Ok(reconstruct(&eig, |l| l.max(0.0)))
}

pub fn project_psd(a: &DMatrix<f64>, provenance: Provenance) -> Result<MetricMatrix> {
    MetricMatrix::new(psd_projection(a)?, Form::Full, provenance)
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix; eigenvalues below
/// `1e-10 * λ_max` are treated as zero.
pub fn symmetric_pinv(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen(a)?;
    let max = eig.eigenvalues.iter().copied().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cutoff = 1e-10 * max;
    Ok(reconstruct(&eig, |l| if l.abs() > cutoff { 1.0 / l } else { 0.0 }))
}

/// Sample covariance (n - 1 denominator) of the rows of `x`.
pub fn sample_covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("covariance needs n >= 2, got {n}")));
    }
    let means = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let mut cov = centered.transpose() * &centered / (n - 1) as f64;
    symmetrize(&mut cov);
    Ok(cov)
}

/// Unsupervised baseline: pseudo-inverse of the sample covariance.
pub fn covariance_metric(x: &FeatureMatrix) -> Result<MetricMatrix> {
    let cov = sample_covariance(x.x())?;
    let pinv = symmetric_pinv(&cov)?;
    let projected = psd_projection(&pinv)?;
    MetricMatrix::new(projected, Form::Full, Provenance::CovarianceInverse)
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok(())
}

/// `(Σ|x_i - y_i|^p)^(1/p)`; `p = f64::INFINITY` gives the Chebyshev distance.
pub fn minkowski_distance(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    check_dims(x, y)?;
    if p.is_nan() || p <= 0.0 {
        return Err(Error::InvalidArgument(format!("Minkowski order p = {p} must be > 0")));
    }
    let diffs = x.iter().zip(y).map(|(a, b)| (a - b).abs());
    Ok(if p == f64::INFINITY {
        diffs.fold(0.0, f64::max)
    } else if p == 1.0 {
        diffs.sum()
    } else if p == 2.0 {
        diffs.map(|v| v * v).sum::<f64>().sqrt()
    } else {
        diffs.map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p)
    })
}

/// Quadratic form `(x - y)' M (x - y)`, clamped at zero within tolerance.
pub fn mahalanobis_sq(x: &[f64], y: &[f64], m: &MetricMatrix) -> Result<f64> {
    check_dims(x, y)?;
    if x.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            actual: x.len(),
        });
    }
    let q = quadratic_form(x, y, m);
    if q < QUADRATIC_CLAMP {
        return Err(Error::InvalidMetric(format!("negative quadratic form {q:e}")));
    }
    Ok(q.max(0.0))
}

fn quadratic_form(x: &[f64], y: &[f64], m: &MetricMatrix) -> f64 {
    let mm = &m.m;
    match m.form {
        Form::Diagonal => x
            .iter()
            .zip(y)
            .enumerate()
            .map(|(i, (a, b))| {
                let d = a - b;
                mm[(i, i)] * d * d
            })
            .sum(),
        Form::Full => {
            let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let d = diff.len();
            let mut q = 0.0;
            for i in 0..d {
                let mut inner = 0.0;
                for (j, dj) in diff.iter().enumerate() {
                    inner += mm[(i, j)] * dj;
                }
                q += diff[i] * inner;
            }
            q
        }
    }
}

pub fn mahalanobis_distance(x: &[f64], y: &[f64], m: &MetricMatrix) -> Result<f64> {
    Ok(mahalanobis_sq(x, y, m)?.sqrt())
}

/// How pairwise dissimilarity is measured.
#[derive(Debug, Clone, PartialEq)]
pub enum DistanceSpec {
    /// Minkowski of order `p`; `f64::INFINITY` stands for Chebyshev.
    Minkowski(f64),
    Mahalanobis(MetricMatrix),
}

impl DistanceSpec {
    pub fn euclidean() -> Self {
        Self::Minkowski(2.0)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Minkowski(p) if p.is_nan() || *p <= 0.0 => Err(Error::InvalidArgument(
                format!("Minkowski order p = {p} must be > 0"),
            )),
            _ => Ok(()),
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Self::Minkowski(p) => minkowski_distance(x, y, *p),
            Self::Mahalanobis(m) => mahalanobis_distance(x, y, m),
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            Self::Minkowski(p) if *p == f64::INFINITY => "minkowski(p=inf)".into(),
            Self::Minkowski(p) => format!("minkowski(p={p})"),
            Self::Mahalanobis(m) => format!("mahalanobis({},{})", m.provenance(), m.form()),
        }
    }
}

/// Symmetric `n x n` dissimilarity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(DMatrix<f64>);

impl DistanceMatrix {
    /// Validates squareness, finiteness, non-negativity, zero diagonal and
    /// symmetry (to a relative `1e-12`).
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        if !d.is_square() {
            return Err(Error::MalformedDistance(format!(
                "{}x{} is not square",
                d.nrows(),
                d.ncols()
            )));
        }
        let n = d.nrows();
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(Error::MalformedDistance(format!("non-zero diagonal at {i}")));
            }
            for j in 0..i {
                let (a, b) = (d[(i, j)], d[(j, i)]);
                if !a.is_finite() || !b.is_finite() || a < 0.0 || b < 0.0 {
                    return Err(Error::MalformedDistance(format!(
                        "entry ({i},{j}) is negative or non-finite"
                    )));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                    return Err(Error::MalformedDistance(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self(d))
    }

    /// Euclidean distances between the points of a 1-D line; handy in tests.
    pub fn from_points_1d(points: &[f64]) -> Self {
        let n = points.len();
        Self(DMatrix::from_fn(n, n, |i, j| (points[i] - points[j]).abs()))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.0 * c)
    }

    /// CSV with an id header row and id column.
    pub fn to_csv(&self, ids: &[String]) -> String {
        let mut out = String::from("id");
        for id in ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (i, id) in ids.iter().enumerate() {
            out.push_str(id);
            for j in 0..self.n() {
                out.push(',');
                out.push_str(&self.0[(i, j)].to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise distances between the rows of `x` under `spec`.
pub fn pairwise_distances(x: &FeatureMatrix, spec: &DistanceSpec) -> Result<DistanceMatrix> {
    pairwise_distances_rows(x.x(), spec)
}

pub fn pairwise_distances_rows(x: &DMatrix<f64>, spec: &DistanceSpec) -> Result<DistanceMatrix> {
    spec.validate()?;
    if let DistanceSpec::Mahalanobis(m) = spec {
        if m.dim() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.dim(),
                actual: x.ncols(),
            });
        }
    }
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    // Each entry is computed independently, so the parallel split has no
    // effect on the values.
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| spec.distance(&rows[i], &rows[j]))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut d = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(DistanceMatrix(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn minkowski_examples() {
        let (x, y) = ([0.0, 0.0], [3.0, 4.0]);
        assert_eq!(minkowski_distance(&x, &y, 2.0).unwrap(), 5.0);
        assert_eq!(minkowski_distance(&x, &y, 1.0).unwrap(), 7.0);
        assert_eq!(minkowski_distance(&x, &y, f64::INFINITY).unwrap(), 4.0);
        assert!(minkowski_distance(&x, &[1.0], 2.0).is_err());
        assert!(minkowski_distance(&x, &y, 0.0).is_err());
        // fractional order is allowed
        assert!(minkowski_distance(&x, &y, 0.5).unwrap() > 7.0);
    }

    #[test]
    fn mahalanobis_examples() {
        let id = MetricMatrix::identity(2);
        assert_eq!(mahalanobis_distance(&[3.0, 4.0], &[0.0, 0.0], &id).unwrap(), 5.0);
        let m = MetricMatrix::from_diagonal(&[4.0, 1.0], Provenance::Mmc).unwrap();
        assert_eq!(mahalanobis_distance(&[1.0, 0.0], &[0.0, 0.0], &m).unwrap(), 2.0);
        assert_eq!(mahalanobis_distance(&[1.5, -2.0], &[1.5, -2.0], &m).unwrap(), 0.0);
        assert!(mahalanobis_distance(&[1.0], &[0.0, 0.0], &m).is_err());
    }

    #[test]
    fn metric_matrix_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(MetricMatrix::new(asym, Form::Full, Provenance::Itml).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(MetricMatrix::new(neg, Form::Full, Provenance::Itml).is_err());
        let offdiag = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]);
        assert!(MetricMatrix::new(offdiag.clone(), Form::Diagonal, Provenance::Mmc).is_err());
        assert!(MetricMatrix::new(offdiag, Form::Full, Provenance::Itml).is_ok());
    }

    #[test]
    fn covariance_examples() {
        // rows with covariance I: (±1, 0), (0, ±1) scaled so the sample covariance is I
        let s = (1.5f64).sqrt();
        let x = DMatrix::from_row_slice(4, 2, &[s, 0.0, -s, 0.0, 0.0, s, 0.0, -s]);
        let fm = FeatureMatrix::from_matrix((0..4).map(|i| i.to_string()).collect(), x).unwrap();
        let m = covariance_metric(&fm).unwrap();
        assert_abs_diff_eq!(m.matrix(), &DMatrix::identity(2, 2), epsilon = 1e-12);

        // covariance diag(2, 0.5)
        let a = (3.0f64).sqrt();
        let b = (0.75f64).sqrt();
        let x = DMatrix::from_row_slice(4, 2, &[a, 0.0, -a, 0.0, 0.0, b, 0.0, -b]);
        let cov = sample_covariance(&x).unwrap();
        assert_abs_diff_eq!(cov, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]), epsilon = 1e-12);
        let fm = FeatureMatrix::from_matrix((0..4).map(|i| i.to_string()).collect(), x).unwrap();
        let m = covariance_metric(&fm).unwrap();
        assert_abs_diff_eq!(
            m.matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
            epsilon = 1e-12
        );
        assert_eq!(m.provenance(), Provenance::CovarianceInverse);
    }

    #[test]
    fn covariance_with_duplicated_column_is_well_defined() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 0.3, 2.0, 2.0, -1.0, 0.5, 0.5, 2.0, -1.0, -1.0, 0.1]);
        let fm = FeatureMatrix::from_matrix((0..4).map(|i| i.to_string()).collect(), x).unwrap();
        let m = covariance_metric(&fm).unwrap();
        assert!(m.min_eigenvalue().unwrap() >= PSD_TOL);
        // the duplicated direction (1, -1, 0) is in the null space
        let q = mahalanobis_sq(&[1.0, -1.0, 0.0], &[0.0, 0.0, 0.0], &m).unwrap();
        assert!(q.abs() < 1e-8);
    }

    #[test]
    fn psd_projection_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_abs_diff_eq!(psd_projection(&a).unwrap(), a, epsilon = 1e-9);

        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_abs_diff_eq!(
            psd_projection(&b).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            epsilon = 1e-12
        );

        // eigenvalues {1, -1} with eigenvectors (1,1)/√2 and (1,-1)/√2:
        // keeping only λ = 1 gives v v' = [[.5,.5],[.5,.5]].
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(
            psd_projection(&c).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]),
            epsilon = 1e-12
        );

        let bad = DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert!(psd_projection(&bad).is_err());
    }

    #[test]
    fn pairwise_small_cases() {
        let fm = FeatureMatrix::from_matrix(vec!["a".into()], DMatrix::from_row_slice(1, 2, &[1.0, 2.0]))
            .unwrap();
        let d = pairwise_distances(&fm, &DistanceSpec::euclidean()).unwrap();
        assert_eq!(d.matrix(), &DMatrix::zeros(1, 1));
    }

    #[test]
    fn euclidean_and_identity_mahalanobis_agree_exactly() {
        let x = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.37 - 0.4);
        let fm = FeatureMatrix::from_matrix((0..6).map(|i| i.to_string()).collect(), x).unwrap();
        let a = pairwise_distances(&fm, &DistanceSpec::euclidean()).unwrap();
        let b = pairwise_distances(&fm, &DistanceSpec::Mahalanobis(MetricMatrix::identity(3))).unwrap();
        assert_eq!(a, b);
        let full = MetricMatrix::new(DMatrix::identity(3, 3), Form::Full, Provenance::Identity).unwrap();
        let c = pairwise_distances(&fm, &DistanceSpec::Mahalanobis(full)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn metric_text_round_trip() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 1.0 / 3.0, 0.1, 1.0, 0.0, 1.0 / 3.0, 0.0, 3.0]);
        let m = project_psd(&a, Provenance::Lmnn).unwrap();
        let back = MetricMatrix::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(MetricMatrix::from_text("2 full lmnn\n1 0\n").is_err());
    }

    #[test]
    fn distance_matrix_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(DistanceMatrix::new(bad).is_err());
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(DistanceMatrix::new(diag).is_err());
        let rect = DMatrix::zeros(2, 3);
        assert!(DistanceMatrix::new(rect).is_err());
    }
}
