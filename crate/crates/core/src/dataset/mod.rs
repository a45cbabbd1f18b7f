//! Raw feature ingest, feature engineering, encoding and synthetic data.

mod encode;
mod engineer;
mod raw;
mod synth;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

pub use encode::{encode, one_hot, standardize};
pub use engineer::{available_features, engineer_features, EngineeredFeature};
pub use raw::{
    load_raw, parse_raw, AttributeKind, ColumnData, ColumnSchema, RawColumn, RawTable,
    RejectedRow, Schema,
};
pub use synth::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};

/// Descriptor of one encoded column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    pub name: String,
    pub source: String,
    /// Category for one-hot columns.
    pub category: Option<String>,
    /// Set when the column had zero variance and was only centered.
    pub constant: bool,
}

/// Affine map applied to a column: `encoded = (raw - mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub mean: f64,
    pub scale: f64,
}

impl Standardization {
    pub const IDENTITY: Self = Self {
        mean: 0.0,
        scale: 1.0,
    };
}

/// `n x d` encoded numeric features with per-column provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    x: DMatrix<f64>,
    columns: Vec<FeatureColumn>,
    standardization: Vec<Standardization>,
}

impl FeatureMatrix {
    pub fn new(
        ids: Vec<String>,
        x: DMatrix<f64>,
        columns: Vec<FeatureColumn>,
        standardization: Vec<Standardization>,
    ) -> Result<Self> {
        if x.nrows() != ids.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                actual: x.nrows(),
            });
        }
        if columns.len() != x.ncols() || standardization.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                actual: columns.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            ids,
            x,
            columns,
            standardization,
        })
    }

    /// Plain numeric matrix with generated column names `x0, x1, ...`.
    pub fn from_matrix(ids: Vec<String>, x: DMatrix<f64>) -> Result<Self> {
        let d = x.ncols();
        let columns = (0..d)
            .map(|j| FeatureColumn {
                name: format!("x{j}"),
                source: format!("x{j}"),
                category: None,
                constant: false,
            })
            .collect();
        Self::new(ids, x, columns, vec![Standardization::IDENTITY; d])
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn standardization(&self) -> &[Standardization] {
        &self.standardization
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.d()).filter(|&j| self.columns[j].constant).collect()
    }

    /// Sub-population restricted to `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                size: self.n(),
            });
        }
        let x = self.x.select_rows(rows);
        Ok(Self {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            x,
            columns: self.columns.clone(),
            standardization: self.standardization.clone(),
        })
    }

    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// CSV dump with provenance header comments.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# encoded feature matrix: n={} d={}\n", self.n(), self.d()));
        out.push_str("# column,source,category,mean,scale,constant\n");
        for (c, s) in self.columns.iter().zip(&self.standardization) {
            out.push_str(&format!(
                "# {},{},{},{},{},{}\n",
                c.name,
                c.source,
                c.category.as_deref().unwrap_or(""),
                s.mean,
                s.scale,
                c.constant
            ));
        }
        out.push_str("id");
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.name);
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for j in 0..self.d() {
                out.push(',');
                out.push_str(&self.x[(i, j)].to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// One output per object, aligned with a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputVector {
    pub name: String,
    pub unit: String,
    ids: Vec<String>,
    y: Vec<f64>,
}

impl OutputVector {
    pub fn new(
        name: impl Into<String>,
        unit: impl Into<String>,
        ids: Vec<String>,
        y: Vec<f64>,
    ) -> Result<Self> {
        if ids.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                actual: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            name: name.into(),
            unit: unit.into(),
            ids,
            y,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Reorder to match `ids` exactly. Every requested id must be present.
    pub fn aligned_to(&self, ids: &[String]) -> Result<Self> {
        let pos: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let y = ids
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .map(|&i| self.y[i])
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!("output {} has no value for {id:?}", self.name))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.name.clone(), self.unit.clone(), ids.to_vec(), y)
    }

    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                size: self.len(),
            });
        }
        Ok(Self {
            name: self.name.clone(),
            unit: self.unit.clone(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            y: rows.iter().map(|&r| self.y[r]).collect(),
        })
    }

    pub fn check_aligned(&self, fm: &FeatureMatrix) -> Result<()> {
        if self.ids != fm.ids() {
            return Err(Error::InvalidArgument(format!(
                "output {} is not aligned with the feature matrix",
                self.name
            )));
        }
        Ok(())
    }
}

/// Split a header like `D_Fuel [kg]` into name and unit.
fn split_unit(header: &str) -> (String, String) {
    match header.find('[') {
        Some(open) if header.ends_with(']') => (
            header[..open].trim().to_string(),
            header[open + 1..header.len() - 1].trim().to_string(),
        ),
        _ => (header.trim().to_string(), String::new()),
    }
}

/// Parse an outputs CSV: `id` then one column per output. Headers may carry a
/// unit as `NAME [unit]`.
pub fn parse_outputs(text: &str) -> Result<Vec<OutputVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let csv_err = |source| Error::Csv {
        path: "<memory>".into(),
        source,
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.get(0) != Some("id") {
        return Err(Error::MissingColumn("id".into()));
    }
    let names: Vec<(String, String)> = headers.iter().skip(1).map(split_unit).collect();
    let mut ids = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id = record.get(0).unwrap_or_default().to_string();
        for (j, col) in cols.iter_mut().enumerate() {
            let cell = record.get(j + 1).unwrap_or_default();
            let v: f64 = cell.parse().map_err(|_| Error::Cell {
                row: line,
                id: id.clone(),
                column: names[j].0.clone(),
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row: line,
                    id: id.clone(),
                    column: names[j].0.clone(),
                    message: "non-finite output".into(),
                });
            }
            col.push(v);
        }
        ids.push(id);
    }
    names
        .into_iter()
        .zip(cols)
        .map(|((name, unit), y)| OutputVector::new(name, unit, ids.clone(), y))
        .collect()
}

pub fn load_outputs(path: impl AsRef<Path>) -> Result<Vec<OutputVector>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_outputs(&text)
}

/// Write an outputs CSV in the format accepted by [`parse_outputs`].
pub fn outputs_to_csv(outputs: &[OutputVector]) -> String {
    let mut out = String::from("id");
    for o in outputs {
        out.push(',');
        out.push_str(&o.name);
        if !o.unit.is_empty() {
            out.push_str(&format!(" [{}]", o.unit));
        }
    }
    out.push('\n');
    if let Some(first) = outputs.first() {
        for (i, id) in first.ids().iter().enumerate() {
            out.push_str(id);
            for o in outputs {
                out.push(',');
                out.push_str(&o.values()[i].to_string());
            }
            out.push('\n');
        }
    }
    out
}

/// Raw-table CSV writer, matching [`load_raw`].
pub fn raw_to_csv(raw: &RawTable) -> String {
    let mut out = String::from("id");
    for c in raw.columns() {
        out.push(',');
        out.push_str(&c.schema.name);
    }
    out.push('\n');
    for (i, id) in raw.ids().iter().enumerate() {
        out.push_str(id);
        for c in raw.columns() {
            out.push(',');
            match &c.data {
                ColumnData::Numeric(v) => out.push_str(&v[i].to_string()),
                ColumnData::Categorical(codes) => out.push_str(&c.schema.categories[codes[i]]),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_parse_units_and_align() {
        let text = "id,D_Fuel [kg],D_NOx\nb,2,20\na,1,10\n";
        let outs = parse_outputs(text).unwrap();
        assert_eq!(outs.len(), 2);
        assert_eq!(outs[0].name, "D_Fuel");
        assert_eq!(outs[0].unit, "kg");
        assert_eq!(outs[1].unit, "");
        let aligned = outs[0].aligned_to(&["a".into(), "b".into()]).unwrap();
        assert_eq!(aligned.values(), &[1.0, 2.0]);
        assert!(outs[0].aligned_to(&["zz".into()]).is_err());
        let back = parse_outputs(&outputs_to_csv(&outs)).unwrap();
        assert_eq!(back, outs);
    }

    #[test]
    fn outputs_reject_non_numeric() {
        assert!(parse_outputs("id,y\na,x\n").is_err());
    }
}
