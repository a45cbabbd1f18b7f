//! Engineered aircraft features built from raw numeric columns.

use crate::dataset::raw::RawTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineeredFeature {
    NoxCoeffTo,
    NoxCoeffCo,
    NoxCoeffId,
    CoCoeffTo,
    CoCoeffCo,
    CoCoeffId,
    TwrTo,
    WingLoading,
    MldMtowRatio,
    DepFuelFlow,
}

use EngineeredFeature::*;

impl EngineeredFeature {
    pub const ALL: [EngineeredFeature; 10] = [
        NoxCoeffTo,
        NoxCoeffCo,
        NoxCoeffId,
        CoCoeffTo,
        CoCoeffCo,
        CoCoeffId,
        TwrTo,
        WingLoading,
        MldMtowRatio,
        DepFuelFlow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoxCoeffTo => "NOX_COEFF_TO",
            NoxCoeffCo => "NOX_COEFF_CO",
            NoxCoeffId => "NOX_COEFF_ID",
            CoCoeffTo => "CO_COEFF_TO",
            CoCoeffCo => "CO_COEFF_CO",
            CoCoeffId => "CO_COEFF_ID",
            TwrTo => "TWR_TO",
            WingLoading => "WING_LOADING",
            MldMtowRatio => "MLD_MTOW_RATIO",
            DepFuelFlow => "DEP_FUEL_FLOW",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn sources(self) -> &'static [&'static str] {
        match self {
            NoxCoeffTo => &["THR_STATIC", "NOX_REI_TO"],
            NoxCoeffCo => &["THR_STATIC", "NOX_REI_CO"],
            NoxCoeffId => &["THR_STATIC", "NOX_REI_ID"],
            CoCoeffTo => &["THR_STATIC", "CO_REI_TO"],
            CoCoeffCo => &["THR_STATIC", "CO_REI_CO"],
            CoCoeffId => &["THR_STATIC", "CO_REI_ID"],
            TwrTo => &["THR_STATIC", "MX_GW_TKO"],
            WingLoading => &["MX_GW_TKO", "WING_AREA"],
            MldMtowRatio => &["MX_GW_LND", "MX_GW_TKO"],
            DepFuelFlow => &["UA_RWF_ID", "UA_RWF_TO", "UA_RWF_CO"],
        }
    }

    /// Evaluate on one row; `v` holds the source values in `sources()` order.
    /// `None` signals a zero denominator.
    pub fn eval(self, v: &[f64]) -> Option<f64> {
        match self {
            NoxCoeffTo | NoxCoeffCo | NoxCoeffId | CoCoeffTo | CoCoeffCo | CoCoeffId => {
                Some(v[0] * v[1])
            }
            TwrTo | WingLoading | MldMtowRatio => (v[1] != 0.0).then(|| v[0] / v[1]),
            DepFuelFlow => Some(0.75 * v[0] + 0.05 * v[1] + 0.20 * v[2]),
        }
    }

    pub fn available_in(self, raw: &RawTable) -> bool {
        self.sources().iter().all(|s| raw.numeric(s).is_some())
    }
}

/// Append the requested engineered columns to `raw`.
pub fn engineer_features(raw: &RawTable, features: &[EngineeredFeature]) -> Result<RawTable> {
    let mut out = raw.clone();
    for &feature in features {
        let sources: Vec<&[f64]> = feature
            .sources()
            .iter()
            .map(|s| {
                raw.numeric(s)
                    .ok_or_else(|| Error::MissingColumn((*s).to_string()))
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(raw.n_rows());
        let mut zero_rows = Vec::new();
        let mut args = vec![0.0; sources.len()];
        for row in 0..raw.n_rows() {
            for (a, s) in args.iter_mut().zip(&sources) {
                *a = s[row];
            }
            match feature.eval(&args) {
                Some(v) => values.push(v),
                None => {
                    zero_rows.push(raw.ids()[row].clone());
                    values.push(f64::NAN);
                }
            }
        }
        if !zero_rows.is_empty() {
            return Err(Error::DivisionByZero {
                feature: feature.name().to_string(),
                rows: zero_rows,
            });
        }
        out.push_numeric(feature.name(), values)?;
    }
    Ok(out)
}

/// Engineered features whose source columns are all present.
pub fn available_features(raw: &RawTable) -> Vec<EngineeredFeature> {
    EngineeredFeature::ALL
        .into_iter()
        .filter(|f| f.available_in(raw))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::raw::{ColumnData, ColumnSchema, RawColumn};

    fn table(cols: &[(&str, Vec<f64>)]) -> RawTable {
        let n = cols[0].1.len();
        RawTable::new(
            (0..n).map(|i| format!("a{i}")).collect(),
            cols.iter()
                .map(|(name, v)| RawColumn {
                    schema: ColumnSchema::numeric(*name),
                    data: ColumnData::Numeric(v.clone()),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn thrust_to_weight() {
        let raw = table(&[("THR_STATIC", vec![50000.0]), ("MX_GW_TKO", vec![200000.0])]);
        let out = engineer_features(&raw, &[TwrTo]).unwrap();
        assert_eq!(out.numeric("TWR_TO").unwrap(), &[0.25]);
    }

    #[test]
    fn departure_fuel_flow_weights() {
        let raw = table(&[
            ("UA_RWF_ID", vec![0.1]),
            ("UA_RWF_TO", vec![1.0]),
            ("UA_RWF_CO", vec![0.8]),
        ]);
        let out = engineer_features(&raw, &[DepFuelFlow]).unwrap();
        assert!((out.numeric("DEP_FUEL_FLOW").unwrap()[0] - 0.285).abs() < 1e-15);
    }

    #[test]
    fn landing_to_takeoff_identity() {
        let raw = table(&[("MX_GW_LND", vec![7.0, 3.5]), ("MX_GW_TKO", vec![7.0, 3.5])]);
        let out = engineer_features(&raw, &[MldMtowRatio]).unwrap();
        assert_eq!(out.numeric("MLD_MTOW_RATIO").unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn zero_denominator_reports_rows() {
        let raw = table(&[("MX_GW_TKO", vec![1.0, 0.0, 0.0]), ("WING_AREA", vec![1.0, 0.0, 2.0])]);
        match engineer_features(&raw, &[WingLoading]) {
            Err(Error::DivisionByZero { feature, rows }) => {
                assert_eq!(feature, "WING_LOADING");
                assert_eq!(rows, vec!["a1".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_source_column() {
        let raw = table(&[("THR_STATIC", vec![1.0])]);
        assert!(matches!(
            engineer_features(&raw, &[NoxCoeffTo]),
            Err(Error::MissingColumn(c)) if c == "NOX_REI_TO"
        ));
        assert!(available_features(&raw).is_empty());
    }
}
