//! CSV ingestion.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use randcoef::SampleData;

use crate::error::{CliError, CliResult};

/// Which columns play which role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub y: String,
    pub x: Vec<String>,
    pub z: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y_name: String,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
    pub y: Vec<f64>,
    /// Row-major regressor values.
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub source: PathBuf,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn to_sample(&self) -> CliResult<SampleData> {
        let n = self.n();
        let y = DVector::from_vec(self.y.clone());
        let x = DMatrix::from_fn(n, self.x_names.len(), |i, j| self.x[i][j]);
        let z = (!self.z_names.is_empty())
            .then(|| DMatrix::from_fn(n, self.z_names.len(), |i, j| self.z[i][j]));
        Ok(SampleData::new(y, x, z)?.with_names(self.x_names.clone(), self.z_names.clone())?)
    }
}

/// Reads the declared columns of a headed CSV file. Rows are numbered from 1
/// for the first data line.
pub fn load_csv(path: &Path, spec: &ColumnSpec) -> CliResult<Dataset> {
    if spec.x.is_empty() {
        return Err(CliError::Config(
            "at least one regressor column is required".into(),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let locate = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema {
                column: name.to_string(),
                path: path.display().to_string(),
            })
    };
    let y_col = locate(&spec.y)?;
    let x_cols = spec
        .x
        .iter()
        .map(|c| locate(c))
        .collect::<CliResult<Vec<_>>>()?;
    let z_cols = spec
        .z
        .iter()
        .map(|c| locate(c))
        .collect::<CliResult<Vec<_>>>()?;

    let mut data = Dataset {
        y_name: spec.y.clone(),
        x_names: spec.x.clone(),
        z_names: spec.z.clone(),
        y: Vec::new(),
        x: Vec::new(),
        z: Vec::new(),
        source: path.to_path_buf(),
    };
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |col: usize| -> CliResult<f64> {
            let name = headers.get(col).unwrap_or_default().to_string();
            let raw = record.get(col).unwrap_or("");
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                return Err(CliError::Missing { row, column: name });
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Parse {
                    row,
                    column: name,
                    value: raw.to_string(),
                }),
            }
        };
        data.y.push(cell(y_col)?);
        data.x
            .push(x_cols.iter().map(|&c| cell(c)).collect::<CliResult<_>>()?);
        data.z
            .push(z_cols.iter().map(|&c| cell(c)).collect::<CliResult<_>>()?);
    }
    if data.y.is_empty() {
        return Err(CliError::Model(randcoef::Error::EmptyInput(
            "data file has no rows",
        )));
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn spec(y: &str, x: &[&str], z: &[&str]) -> ColumnSpec {
        ColumnSpec {
            y: y.into(),
            x: x.iter().map(|s| s.to_string()).collect(),
            z: z.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn three_rows() {
        let f = file("y,x1\n1,0.5\n2,0.25\n3,-1\n");
        let d = load_csv(f.path(), &spec("y", &["x1"], &[])).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.x[2], vec![-1.0]);
        assert_eq!(d.to_sample().unwrap().x_names, vec!["x1".to_string()]);
    }

    #[test]
    fn missing_declared_column() {
        let f = file("y,x1\n1,0.5\n");
        let err = load_csv(f.path(), &spec("y", &["x1"], &["z1"])).unwrap_err();
        assert_eq!(err.kind(), "SchemaError");
        assert!(err.to_string().contains("z1"));
    }

    #[test]
    fn bad_cells_report_row_and_column() {
        let f = file("y,x1\n1,0.5\n2,abc\n");
        match load_csv(f.path(), &spec("y", &["x1"], &[])).unwrap_err() {
            CliError::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (2, "x1")),
            e => panic!("{e:?}"),
        }
        let f = file("y,x1\n1,0.5\n,0.1\n");
        match load_csv(f.path(), &spec("y", &["x1"], &[])).unwrap_err() {
            CliError::Missing { row, column } => assert_eq!((row, column.as_str()), (2, "y")),
            e => panic!("{e:?}"),
        }
        let f = file("y,x1\n1,inf\n");
        assert_eq!(
            load_csv(f.path(), &spec("y", &["x1"], &[]))
                .unwrap_err()
                .kind(),
            "ParseError"
        );
    }

    #[test]
    fn unused_columns_may_hold_anything() {
        let f = file("id,y,x1,note\na,1,0.5,\nb,2,0.7,text\n");
        let d = load_csv(f.path(), &spec("y", &["x1"], &[])).unwrap();
        assert_eq!(d.y, vec![1.0, 2.0]);
    }
}
