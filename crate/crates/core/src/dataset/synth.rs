use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{FeatureMatrix, OutputVector};
use crate::error::{Error, Result};

/// Parameters of a synthetic population: i.i.d. standard-normal features and
/// an output that is a weighted sum of a few of them plus Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    /// `(feature index, weight)` pairs.
    pub signal: Vec<(usize, f64)>,
    pub noise_sd: f64,
    /// Constant added to every output; keeps outputs positive when ratios
    /// such as the coefficient of variation are evaluated.
    pub intercept: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, d: usize, signal: Vec<(usize, f64)>, noise_sd: f64, seed: u64) -> Self {
        Self {
            n,
            d,
            signal,
            noise_sd,
            intercept: 0.0,
            seed,
        }
    }

    pub fn with_intercept(mut self, intercept: f64) -> Self {
        self.intercept = intercept;
        self
    }

    pub fn signal_indices(&self) -> Vec<usize> {
        self.signal.iter().map(|&(j, _)| j).collect()
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(FeatureMatrix, OutputVector)> {
    if spec.n < 4 {
        return Err(Error::InvalidArgument(format!("n = {} < 4", spec.n)));
    }
    if let Some(&(j, _)) = spec.signal.iter().find(|&&(j, _)| j >= spec.d) {
        return Err(Error::IndexOutOfRange {
            index: j,
            size: spec.d,
        });
    }
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return Err(Error::InvalidArgument("noise sd must be finite and >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Vec::with_capacity(spec.n * spec.d);
    for _ in 0..spec.n * spec.d {
        data.push(StandardNormal.sample(&mut rng));
    }
    let x = DMatrix::from_row_slice(spec.n, spec.d, &data);
    let noise = Normal::new(0.0, spec.noise_sd)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let y: Vec<f64> = (0..spec.n)
        .map(|i| {
            let signal: f64 = spec.signal.iter().map(|&(j, w)| w * x[(i, j)]).sum();
            let eps = if spec.noise_sd > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            spec.intercept + signal + eps
        })
        .collect();
    let width = spec.n.to_string().len();
    let ids: Vec<String> = (0..spec.n).map(|i| format!("obj{i:0width$}")).collect();
    let fm = FeatureMatrix::from_matrix(ids.clone(), x)?;
    let out = OutputVector::new("y", "", ids, y)?;
    Ok((fm, out))
}
