use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Attribute kind of a raw column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttributeKind {
    Numeric,
    Nominal,
    Ordinal,
}

impl AttributeKind {
    pub fn parse(token: &str) -> Option<Self> {
        match token.trim().to_ascii_lowercase().as_str() {
            "numeric" | "nu" => Some(Self::Numeric),
            "nominal" | "no" => Some(Self::Nominal),
            "ordinal" | "or" => Some(Self::Ordinal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Numeric => "numeric",
            Self::Nominal => "nominal",
            Self::Ordinal => "ordinal",
        }
    }

    pub fn is_categorical(self) -> bool {
        !matches!(self, Self::Numeric)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: AttributeKind,
    /// Declared category set; empty for numeric columns.
    pub categories: Vec<String>,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Numeric,
            categories: Vec::new(),
        }
    }

    pub fn categorical(
        name: impl Into<String>,
        kind: AttributeKind,
        categories: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            name: name.into(),
            kind,
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }
}

/// Column-kind declaration for a feature file.
///
/// Text form, one column per line: `name,kind[,category,...]`. Blank lines and
/// lines starting with `#` are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schema {
    pub columns: Vec<ColumnSchema>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if c.name.is_empty() {
                return Err(Error::Schema("empty column name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column {:?}", c.name)));
            }
            match c.kind {
                AttributeKind::Numeric if !c.categories.is_empty() => {
                    return Err(Error::Schema(format!(
                        "numeric column {:?} declares categories",
                        c.name
                    )))
                }
                AttributeKind::Nominal | AttributeKind::Ordinal => {
                    if c.categories.is_empty() {
                        return Err(Error::Schema(format!(
                            "categorical column {:?} has no categories",
                            c.name
                        )));
                    }
                    let uniq: HashSet<_> = c.categories.iter().collect();
                    if uniq.len() != c.categories.len() {
                        return Err(Error::Schema(format!(
                            "column {:?} repeats a category",
                            c.name
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(Self { columns })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let name = parts.next().unwrap_or_default().to_string();
            let kind_tok = parts.next().ok_or_else(|| {
                Error::Schema(format!("line {}: missing kind for {name:?}", lineno + 1))
            })?;
            let kind = AttributeKind::parse(kind_tok).ok_or_else(|| {
                Error::Schema(format!("line {}: unknown kind {kind_tok:?}", lineno + 1))
            })?;
            let categories = parts.filter(|s| !s.is_empty()).map(String::from).collect();
            columns.push(ColumnSchema {
                name,
                kind,
                categories,
            });
        }
        Self::new(columns)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.columns {
            out.push_str(&c.name);
            out.push(',');
            out.push_str(c.kind.as_str());
            for cat in &c.categories {
                out.push(',');
                out.push_str(cat);
            }
            out.push('\n');
        }
        out
    }

    pub fn get(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    /// Codes indexing into the column's declared categories.
    Categorical(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub schema: ColumnSchema,
    pub data: ColumnData,
}

/// A row dropped at load because of a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

/// Validated raw feature table, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    ids: Vec<String>,
    columns: Vec<RawColumn>,
    pub rejected: Vec<RejectedRow>,
}

const MISSING_TOKENS: [&str; 5] = ["", "na", "n/a", "null", "?"];

fn is_missing(token: &str) -> bool {
    let t = token.trim().to_ascii_lowercase();
    MISSING_TOKENS.contains(&t.as_str())
}

impl RawTable {
    pub fn new(ids: Vec<String>, columns: Vec<RawColumn>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (row, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::InvalidArgument(format!("row {row} has an empty id")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate id {id:?}")));
            }
        }
        let mut names = HashSet::new();
        for col in &columns {
            if !names.insert(col.schema.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column {:?}", col.schema.name)));
            }
            let len = match &col.data {
                ColumnData::Numeric(v) => {
                    if col.schema.kind != AttributeKind::Numeric {
                        return Err(Error::Schema(format!(
                            "column {:?} holds numbers but is declared {}",
                            col.schema.name,
                            col.schema.kind.as_str()
                        )));
                    }
                    if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::Cell {
                            row,
                            id: ids.get(row).cloned().unwrap_or_default(),
                            column: col.schema.name.clone(),
                            message: "non-finite value".into(),
                        });
                    }
                    v.len()
                }
                ColumnData::Categorical(codes) => {
                    if !col.schema.kind.is_categorical() {
                        return Err(Error::Schema(format!(
                            "numeric column {:?} holds category codes",
                            col.schema.name
                        )));
                    }
                    if let Some(row) = codes.iter().position(|&c| c >= col.schema.categories.len())
                    {
                        return Err(Error::Cell {
                            row,
                            id: ids.get(row).cloned().unwrap_or_default(),
                            column: col.schema.name.clone(),
                            message: "category code out of range".into(),
                        });
                    }
                    codes.len()
                }
            };
            if len != ids.len() {
                return Err(Error::DimensionMismatch {
                    expected: ids.len(),
                    actual: len,
                });
            }
        }
        Ok(Self {
            ids,
            columns,
            rejected: Vec::new(),
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn columns(&self) -> &[RawColumn] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.schema.name == name)
    }

    pub fn numeric(&self, name: &str) -> Option<&[f64]> {
        match self.column(name).map(|c| &c.data) {
            Some(ColumnData::Numeric(v)) => Some(v),
            _ => None,
        }
    }

    pub fn schema(&self) -> Schema {
        Schema {
            columns: self.columns.iter().map(|c| c.schema.clone()).collect(),
        }
    }

    /// Append a numeric column. Fails on a name clash or length mismatch.
    pub fn push_numeric(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.column(&name).is_some() {
            return Err(Error::Schema(format!("column {name:?} already exists")));
        }
        if values.len() != self.ids.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ids.len(),
                actual: values.len(),
            });
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Cell {
                row,
                id: self.ids[row].clone(),
                column: name,
                message: "non-finite value".into(),
            });
        }
        self.columns.push(RawColumn {
            schema: ColumnSchema::numeric(name),
            data: ColumnData::Numeric(values),
        });
        Ok(())
    }
}

/// Load a delimiter-separated feature file with a header row whose first
/// column is `id`. Every other header must be declared in `schema`, and every
/// schema column must be present.
///
/// Rows with a missing value are skipped and listed in `RawTable::rejected`.
pub fn load_raw(path: impl AsRef<Path>, schema: &Schema) -> Result<RawTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let delimiter = if path.extension().is_some_and(|e| e == "tsv") {
        b'\t'
    } else {
        b','
    };
    parse_raw(&text, delimiter, schema).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn parse_raw(text: &str, delimiter: u8, schema: &Schema) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
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
    let mut specs = Vec::new();
    for h in headers.iter().skip(1) {
        let spec = schema
            .get(h)
            .ok_or_else(|| Error::Schema(format!("column {h:?} is not declared in the schema")))?;
        specs.push(spec.clone());
    }
    for c in &schema.columns {
        if !specs.iter().any(|s| s.name == c.name) {
            return Err(Error::MissingColumn(c.name.clone()));
        }
    }

    let mut ids = Vec::new();
    let mut data: Vec<ColumnData> = specs
        .iter()
        .map(|s| match s.kind {
            AttributeKind::Numeric => ColumnData::Numeric(Vec::new()),
            _ => ColumnData::Categorical(Vec::new()),
        })
        .collect();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();

    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id = record.get(0).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                path: "<memory>".into(),
                line,
                message: "empty identifier".into(),
            });
        }
        if let Some(j) = (1..=specs.len()).find(|&j| record.get(j).is_none_or(is_missing)) {
            rejected.push(RejectedRow {
                line,
                id,
                reason: format!("missing value in column {:?}", specs[j - 1].name),
            });
            continue;
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Parse {
                path: "<memory>".into(),
                line,
                message: format!("duplicate identifier {id:?}"),
            });
        }
        let row = ids.len();
        for (j, (spec, col)) in specs.iter().zip(data.iter_mut()).enumerate() {
            let cell = record.get(j + 1).unwrap_or_default();
            match col {
                ColumnData::Numeric(v) => {
                    let value: f64 = cell.parse().map_err(|_| Error::Cell {
                        row: line,
                        id: id.clone(),
                        column: spec.name.clone(),
                        message: format!("cannot parse {cell:?} as a number"),
                    })?;
                    if !value.is_finite() {
                        return Err(Error::Cell {
                            row: line,
                            id: id.clone(),
                            column: spec.name.clone(),
                            message: format!("non-finite value {cell:?}"),
                        });
                    }
                    v.push(value);
                }
                ColumnData::Categorical(codes) => {
                    let code = spec
                        .categories
                        .iter()
                        .position(|c| c == cell)
                        .ok_or_else(|| Error::Cell {
                            row: line,
                            id: id.clone(),
                            column: spec.name.clone(),
                            message: format!("undeclared category {cell:?}"),
                        })?;
                    codes.push(code);
                }
            }
        }
        debug_assert_eq!(row, ids.len());
        ids.push(id);
    }

    let columns = specs
        .into_iter()
        .zip(data)
        .map(|(schema, data)| RawColumn { schema, data })
        .collect();
    let mut table = RawTable::new(ids, columns)?;
    table.rejected = rejected;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::parse("MX_GW_TKO,numeric\nENGINE_TYPE,nominal,J,P,T\n").unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let text = "id,MX_GW_TKO,ENGINE_TYPE\na,100,J\nb,200,P\nc,300,T\n";
        let t = parse_raw(text, b',', &schema()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.columns().len(), 2);
        assert_eq!(t.numeric("MX_GW_TKO").unwrap(), &[100.0, 200.0, 300.0]);
        assert_eq!(
            t.column("ENGINE_TYPE").unwrap().data,
            ColumnData::Categorical(vec![0, 1, 2])
        );
    }

    #[test]
    fn bad_numeric_cell_names_row_and_column() {
        let text = "id,MX_GW_TKO,ENGINE_TYPE\na,100,J\nb,abc,P\n";
        let err = parse_raw(text, b',', &schema()).unwrap_err();
        match err {
            Error::Cell { row, id, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(id, "b");
                assert_eq!(column, "MX_GW_TKO");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn header_only_is_empty_table() {
        let t = parse_raw("id,MX_GW_TKO,ENGINE_TYPE\n", b',', &schema()).unwrap();
        assert_eq!(t.n_rows(), 0);
        assert_eq!(t.columns().len(), 2);
    }

    #[test]
    fn undeclared_category_is_an_error() {
        let text = "id,MX_GW_TKO,ENGINE_TYPE\na,100,X\n";
        assert!(matches!(
            parse_raw(text, b',', &schema()),
            Err(Error::Cell { .. })
        ));
    }

    #[test]
    fn missing_id_column() {
        let text = "name,MX_GW_TKO,ENGINE_TYPE\na,100,J\n";
        assert!(matches!(
            parse_raw(text, b',', &schema()),
            Err(Error::MissingColumn(c)) if c == "id"
        ));
    }

    #[test]
    fn missing_values_reject_the_row() {
        let text = "id,MX_GW_TKO,ENGINE_TYPE\na,100,J\nb,,P\nc,NA,T\nd,5,T\n";
        let t = parse_raw(text, b',', &schema()).unwrap();
        assert_eq!(t.ids(), &["a".to_string(), "d".to_string()]);
        assert_eq!(t.rejected.len(), 2);
        assert_eq!(t.rejected[0].line, 3);
        assert_eq!(t.rejected[1].id, "c");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "id,MX_GW_TKO,ENGINE_TYPE\na,100,J\na,1,P\n";
        assert!(parse_raw(text, b',', &schema()).is_err());
    }

    #[test]
    fn schema_round_trips_through_text() {
        let s = schema();
        assert_eq!(Schema::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn schema_rejects_bad_kind() {
        assert!(Schema::parse("x,weird\n").is_err());
        assert!(Schema::parse("x,nominal\n").is_err());
    }
}
