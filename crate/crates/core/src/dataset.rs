//! Subject-level data: CSV ingestion, validation and one-hot encoding.

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("missing value at row {row}, column `{column}`")]
    Missing { row: usize, column: String },
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` is not numeric")]
    NonNumeric(String),
    #[error("column `{0}` is not categorical")]
    NotCategorical(String),
    #[error("column `{column}` has a single level `{level}`; one-hot encoding needs at least two")]
    SingleLevel { column: String, level: String },
    #[error("row {row}, column `{column}`: {message}")]
    Invalid {
        row: usize,
        column: String,
        message: String,
    },
    #[error("dataset has {0} rows; at least 2 are required")]
    TooFewRows(usize),
    #[error("no events observed in column `{0}`")]
    NoEvents(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

/// Validated subject table. Row numbers in errors are 1-based data rows
/// (the header is not counted).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n: usize,
    pub time_col: String,
    pub event_col: String,
    pub treat_col: String,
}

impl Dataset {
    /// Builds a dataset from in-memory columns and checks its invariants.
    pub fn new(
        columns: Vec<Column>,
        time_col: &str,
        event_col: &str,
        treat_col: &str,
    ) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DatasetError::DuplicateColumn(c.name.clone()));
            }
        }
        let n = columns.first().map_or(0, |c| c.len());
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(DatasetError::Invalid {
                row: bad.len().min(n) + 1,
                column: bad.name.clone(),
                message: "column length differs from the first column".into(),
            });
        }
        let d = Dataset {
            columns,
            n,
            time_col: time_col.into(),
            event_col: event_col.into(),
            treat_col: treat_col.into(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    fn find(&self, name: &str) -> Result<&Column, DatasetError> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| DatasetError::UnknownColumn(name.into()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64], DatasetError> {
        match &self.find(name)?.data {
            ColumnData::Numeric(v) => Ok(v),
            ColumnData::Categorical(_) => Err(DatasetError::NonNumeric(name.into())),
        }
    }

    pub fn times(&self) -> &[f64] {
        self.numeric(&self.time_col).expect("validated")
    }

    pub fn events(&self) -> &[f64] {
        self.numeric(&self.event_col).expect("validated")
    }

    pub fn treatment(&self) -> &[f64] {
        self.numeric(&self.treat_col).expect("validated")
    }

    pub fn max_time(&self) -> f64 {
        self.times().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn validate(&self) -> Result<(), DatasetError> {
        if self.n < 2 {
            return Err(DatasetError::TooFewRows(self.n));
        }
        let check = |col: &str, ok: &dyn Fn(f64) -> bool, what: &str| -> Result<(), DatasetError> {
            let v = self.numeric(col)?;
            if let Some(i) = v.iter().position(|&x| !ok(x)) {
                return Err(DatasetError::Invalid {
                    row: i + 1,
                    column: col.into(),
                    message: format!("value {} {what}", v[i]),
                });
            }
            Ok(())
        };
        let binary = |x: f64| x == 0.0 || x == 1.0;
        check(&self.time_col, &|x| x.is_finite() && x > 0.0, "is not a positive finite time")?;
        check(&self.event_col, &binary, "is not an event indicator in {0,1}")?;
        check(&self.treat_col, &binary, "is not a treatment level in {0,1}")?;
        for c in &self.columns {
            if let ColumnData::Numeric(v) = &c.data {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(DatasetError::Missing {
                        row: i + 1,
                        column: c.name.clone(),
                    });
                }
            }
        }
        if !self.events().contains(&1.0) {
            return Err(DatasetError::NoEvents(self.event_col.clone()));
        }
        Ok(())
    }

    /// Replaces categorical `col` with one 0/1 indicator per level, named
    /// `<col><level>`, levels in first-appearance order.
    pub fn one_hot(&self, col: &str) -> Result<Dataset, DatasetError> {
        let pos = self
            .columns
            .iter()
            .position(|c| c.name == col)
            .ok_or_else(|| DatasetError::UnknownColumn(col.into()))?;
        let values = match &self.columns[pos].data {
            ColumnData::Categorical(v) => v,
            ColumnData::Numeric(_) => return Err(DatasetError::NotCategorical(col.into())),
        };
        let indicators = one_hot_columns(col, values)?;
        let mut columns = self.columns.clone();
        columns.splice(pos..=pos, indicators);
        Dataset::new(columns, &self.time_col, &self.event_col, &self.treat_col)
    }
}

impl Column {
    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn one_hot_columns(col: &str, values: &[String]) -> Result<Vec<Column>, DatasetError> {
    let mut levels: Vec<&str> = Vec::new();
    for v in values {
        if !levels.contains(&v.as_str()) {
            levels.push(v);
        }
    }
    if levels.len() < 2 {
        return Err(DatasetError::SingleLevel {
            column: col.into(),
            level: levels.first().map(|s| s.to_string()).unwrap_or_default(),
        });
    }
    Ok(levels
        .iter()
        .map(|level| Column {
            name: format!("{col}{level}"),
            data: ColumnData::Numeric(
                values
                    .iter()
                    .map(|v| if v == level { 1.0 } else { 0.0 })
                    .collect(),
            ),
        })
        .collect())
}

/// Reads a headed CSV. Columns whose every value parses as a number are
/// numeric; any other column is categorical and gets one-hot expanded.
pub fn load_csv(
    path: impl AsRef<Path>,
    time_col: &str,
    event_col: &str,
    treat_col: &str,
) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, time_col, event_col, treat_col)
}

pub fn read_csv<R: std::io::Read>(
    reader: R,
    time_col: &str,
    event_col: &str,
    treat_col: &str,
) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DatasetError::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(DatasetError::DuplicateColumn(h.clone()));
        }
    }
    for want in [time_col, event_col, treat_col] {
        if !header.iter().any(|h| h == want) {
            return Err(DatasetError::UnknownColumn(want.into()));
        }
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DatasetError::Parse {
            row: i + 1,
            message: e.to_string(),
        })?;
        for (j, field) in rec.iter().enumerate() {
            let field = field.trim();
            if field.is_empty() || field == "NA" {
                return Err(DatasetError::Missing {
                    row: i + 1,
                    column: header[j].clone(),
                });
            }
            raw[j].push(field.to_string());
        }
    }

    let mut columns = Vec::new();
    for (name, values) in header.into_iter().zip(raw) {
        let parsed: Option<Vec<f64>> = values.iter().map(|v| v.parse::<f64>().ok()).collect();
        match parsed {
            Some(nums) => columns.push(Column {
                name,
                data: ColumnData::Numeric(nums),
            }),
            None => {
                if [time_col, event_col, treat_col].contains(&name.as_str()) {
                    let row = values.iter().position(|v| v.parse::<f64>().is_err()).unwrap_or(0);
                    return Err(DatasetError::Parse {
                        row: row + 1,
                        message: format!("column `{name}` must be numeric, found `{}`", values[row]),
                    });
                }
                columns.extend(one_hot_columns(&name, &values)?);
            }
        }
    }
    Dataset::new(columns, time_col, event_col, treat_col)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str) -> Result<Dataset, DatasetError> {
        read_csv(text.as_bytes(), "y", "delta", "A")
    }

    #[test]
    fn parses_and_expands_strings() {
        let d = csv("y,delta,A,grp\n1.5,1,0,yes\n2,0,1,no\n3,1,1,yes\n").unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.column_names(), vec!["y", "delta", "A", "grpyes", "grpno"]);
        let yes = d.numeric("grpyes").unwrap();
        let no = d.numeric("grpno").unwrap();
        for i in 0..3 {
            assert_eq!(yes[i] + no[i], 1.0);
        }
        assert_eq!(d.max_time(), 3.0);
    }

    #[test]
    fn reports_offending_row() {
        let err = csv("y,delta,A\n1,1,0\n2,2,1\n3,1,0\n").unwrap_err();
        match err {
            DatasetError::Invalid { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "delta");
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            csv("y,delta,A\n1,1,0\n-2,1,1\n"),
            Err(DatasetError::Invalid { row: 2, .. })
        ));
        assert!(matches!(
            csv("y,delta,A\n1,1,0\n2,1,3\n"),
            Err(DatasetError::Invalid { row: 2, .. })
        ));
    }

    #[test]
    fn missing_and_duplicates_are_errors() {
        assert!(matches!(
            csv("y,delta,A,x\n1,1,0,\n2,1,1,3\n"),
            Err(DatasetError::Missing { row: 1, .. })
        ));
        assert!(matches!(
            csv("y,delta,A,A\n1,1,0,1\n2,1,1,1\n"),
            Err(DatasetError::DuplicateColumn(_))
        ));
        assert!(matches!(csv("y,delta\n1,1\n2,1\n"), Err(DatasetError::UnknownColumn(_))));
        assert!(matches!(
            csv("y,delta,A\n1,1,x\n2,1,1\n"),
            Err(DatasetError::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn dataset_level_invariants() {
        assert!(matches!(csv("y,delta,A\n1,1,0\n"), Err(DatasetError::TooFewRows(1))));
        assert!(matches!(csv("y,delta,A\n1,0,0\n2,0,1\n"), Err(DatasetError::NoEvents(_))));
    }

    #[test]
    fn single_level_category_rejected() {
        assert!(matches!(
            csv("y,delta,A,g\n1,1,0,a\n2,1,1,a\n"),
            Err(DatasetError::SingleLevel { .. })
        ));
    }

    #[test]
    fn one_hot_in_place() {
        let cols = vec![
            Column { name: "y".into(), data: ColumnData::Numeric(vec![1.0, 2.0, 3.0]) },
            Column {
                name: "c".into(),
                data: ColumnData::Categorical(vec!["b".into(), "a".into(), "b".into()]),
            },
            Column { name: "delta".into(), data: ColumnData::Numeric(vec![1.0, 0.0, 1.0]) },
            Column { name: "A".into(), data: ColumnData::Numeric(vec![0.0, 1.0, 0.0]) },
        ];
        let d = Dataset::new(cols, "y", "delta", "A").unwrap();
        let e = d.one_hot("c").unwrap();
        assert_eq!(e.column_names(), vec!["y", "cb", "ca", "delta", "A"]);
        assert_eq!(e.numeric("cb").unwrap(), &[1.0, 0.0, 1.0]);
        assert!(matches!(e.one_hot("y"), Err(DatasetError::NotCategorical(_))));
    }
}
