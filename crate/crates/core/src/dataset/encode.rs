use nalgebra::DMatrix;

use super::{FeatureColumn, FeatureMatrix, Standardization};
use crate::dataset::raw::{ColumnData, RawTable};
use crate::error::Result;
use crate::stats;

/// Expand categorical columns into one binary column per declared category.
/// Ordinal columns are treated exactly like nominal ones. No scaling.
pub fn one_hot(raw: &RawTable) -> Result<FeatureMatrix> {
    let n = raw.n_rows();
    let mut columns = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for col in raw.columns() {
        match &col.data {
            ColumnData::Numeric(v) => {
                columns.push(FeatureColumn {
                    name: col.schema.name.clone(),
                    source: col.schema.name.clone(),
                    category: None,
                    constant: false,
                });
                data.push(v.clone());
            }
            ColumnData::Categorical(codes) => {
                for (k, cat) in col.schema.categories.iter().enumerate() {
                    columns.push(FeatureColumn {
                        name: format!("{}={}", col.schema.name, cat),
                        source: col.schema.name.clone(),
                        category: Some(cat.clone()),
                        constant: false,
                    });
                    data.push(codes.iter().map(|&c| f64::from(u8::from(c == k))).collect());
                }
            }
        }
    }
    let d = columns.len();
    let x = DMatrix::from_fn(n, d, |i, j| data[j][i]);
    FeatureMatrix::new(
        raw.ids().to_vec(),
        x,
        columns,
        vec![Standardization::IDENTITY; d],
    )
}

/// Standardize every column to sample mean 0 and sample sd 1. Zero-variance
/// columns are centered and flagged `constant`. The recorded transform is
/// composed with any transform already applied.
pub fn standardize(fm: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut x = fm.x().clone();
    let mut columns = fm.columns().to_vec();
    let mut standardization = Vec::with_capacity(fm.d());
    for j in 0..fm.d() {
        let mut col: Vec<f64> = x.column(j).iter().copied().collect();
        let m = stats::mean(&col);
        let sd = stats::sample_sd(&col);
        let constant = !(sd > 1e-12 * m.abs().max(1.0));
        let scale = if constant { 1.0 } else { sd };
        for v in col.iter_mut() {
            *v = if constant { 0.0 } else { (*v - m) / scale };
        }
        x.set_column(j, &nalgebra::DVector::from_vec(col));
        let prev = fm.standardization()[j];
        standardization.push(Standardization {
            mean: if fm.n() == 0 { prev.mean } else { prev.mean + prev.scale * m },
            scale: prev.scale * scale,
        });
        columns[j].constant = constant;
    }
    FeatureMatrix::new(fm.ids().to_vec(), x, columns, standardization)
}

/// One-hot encode then standardize.
pub fn encode(raw: &RawTable) -> Result<FeatureMatrix> {
    standardize(&one_hot(raw)?)
}
