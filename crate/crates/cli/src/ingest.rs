//! CSV ingestion: header-driven numeric tables and spatial weight files.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use scoretest::{Dataset, SpatialWeights};

use crate::error::{CliError, CliResult};

/// Numeric columns keyed by header name, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers.iter().position(|h| h == name).map(|j| self.columns[j].as_slice())
    }

    pub fn into_dataset(self) -> scoretest::Result<Dataset> {
        Dataset::new(self.headers.into_iter().zip(self.columns).collect())
    }

    /// Columns as an `n x k` matrix, in the given order.
    pub fn matrix(&self, names: &[String]) -> Option<DMatrix<f64>> {
        let cols: Vec<&[f64]> = names.iter().map(|c| self.column(c)).collect::<Option<_>>()?;
        Some(DMatrix::from_fn(self.n(), cols.len(), |i, j| cols[j][i]))
    }
}

fn reader(path: &Path, headers: bool) -> CliResult<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(path, e.to_string()))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let msg = match e.kind() {
        csv::ErrorKind::UnequalLengths { pos: Some(pos), expected_len, len } => {
            format!("line {}: expected {expected_len} fields, found {len}", pos.line())
        }
        _ => e.to_string(),
    };
    CliError::input(path, msg)
}

fn parse_cell(path: &Path, line: u64, column: &str, cell: &str) -> CliResult<f64> {
    if cell.is_empty() {
        return Err(CliError::input(path, format!("line {line}, column '{column}': blank cell")));
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::input(path, format!("line {line}, column '{column}': '{cell}' is not a finite number"))),
    }
}

/// Read a CSV with a header row into numeric columns; every `required` column must be present.
pub fn ingest_table(path: &Path, required: &[&str]) -> CliResult<Table> {
    let mut rdr = reader(path, true)?;
    let headers: Vec<String> = rdr.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect();
    if headers.iter().all(String::is_empty) {
        return Err(CliError::input(path, "file is empty"));
    }
    for (j, h) in headers.iter().enumerate() {
        if h.is_empty() {
            return Err(CliError::input(path, format!("line 1: header of column {} is blank", j + 1)));
        }
        if headers[..j].contains(h) {
            return Err(CliError::input(path, format!("line 1: duplicate column '{h}'")));
        }
    }
    for r in required {
        if !headers.iter().any(|h| h == r) {
            return Err(CliError::input(path, format!("missing required column '{r}'")));
        }
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        for (j, cell) in rec.iter().enumerate() {
            columns[j].push(parse_cell(path, line, &headers[j], cell)?);
        }
    }
    if columns[0].is_empty() {
        return Err(CliError::input(path, "no data rows after the header"));
    }
    Ok(Table { headers, columns })
}

/// Read a CSV with a header into a [`Dataset`] whose columns carry the header names.
pub fn ingest_csv(path: &Path, required: &[&str]) -> CliResult<Dataset> {
    ingest_table(path, required)?.into_dataset().map_err(|e| CliError::input(path, e.to_string()))
}

fn is_coordinate_header(fields: &[String]) -> bool {
    let lower: Vec<String> = fields.iter().map(|f| f.to_ascii_lowercase()).collect();
    lower.len() == 3 && lower[0] == "i" && lower[1] == "j" && (lower[2] == "weight" || lower[2] == "w")
}

/// Spatial weights for `n` units: dense matrix (header optional) or `i,j,weight` triplets.
pub fn ingest_weights(path: &Path, n: usize) -> CliResult<SpatialWeights> {
    let mut rdr = reader(path, false)?;
    let mut rows: Vec<(u64, Vec<String>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(CliError::input(path, "file is empty"));
    }
    let bad = |e: scoretest::Error| CliError::input(path, e.to_string());
    if is_coordinate_header(&rows[0].1) {
        let mut triplets = Vec::with_capacity(rows.len() - 1);
        for (line, fields) in &rows[1..] {
            let index = |k: usize, name: &str| -> CliResult<usize> {
                let v = parse_cell(path, *line, name, &fields[k])?;
                if v < 0.0 || v.fract() != 0.0 || v as usize >= n {
                    return Err(CliError::input(path, format!("line {line}, column '{name}': {v} is not an index in 0..{n}")));
                }
                Ok(v as usize)
            };
            triplets.push((index(0, "i")?, index(1, "j")?, parse_cell(path, *line, "weight", &fields[2])?));
        }
        return SpatialWeights::from_triplets(n, &triplets).map_err(bad);
    }
    // A first row that is not numeric is a header.
    let body = if rows[0].1.iter().any(|c| c.parse::<f64>().is_err()) { &rows[1..] } else { &rows[..] };
    if body.len() != n {
        return Err(CliError::input(path, format!("dense weights have {} rows, data has {n}", body.len())));
    }
    let mut w = DMatrix::zeros(n, n);
    for (i, (line, fields)) in body.iter().enumerate() {
        if fields.len() != n {
            return Err(CliError::input(path, format!("line {line}: expected {n} fields, found {}", fields.len())));
        }
        for (j, cell) in fields.iter().enumerate() {
            w[(i, j)] = parse_cell(path, *line, &format!("{}", j + 1), cell)?;
        }
    }
    SpatialWeights::new(w).map_err(bad)
}

/// Single-column response file.
pub fn ingest_vector(path: &Path) -> CliResult<DVector<f64>> {
    let t = ingest_table(path, &[])?;
    if t.columns.len() != 1 {
        return Err(CliError::input(path, format!("expected one column, found {}", t.columns.len())));
    }
    Ok(DVector::from_vec(t.columns.into_iter().next().expect("one column")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn message(e: CliError) -> String {
        e.to_string()
    }

    #[test]
    fn two_column_file() {
        let body: String = (0..100).map(|i| format!("{i},{}\n", i as f64 * 0.5)).collect();
        let f = file(&format!("y,x\n{body}"));
        let d = ingest_csv(f.path(), &["y"]).unwrap();
        assert_eq!(d.n(), 100);
        assert_eq!(d.column("x").unwrap()[3], 1.5);
    }

    #[test]
    fn empty_and_header_only() {
        assert!(message(ingest_csv(file("").path(), &[]).unwrap_err()).contains("empty"));
        assert!(message(ingest_csv(file("y\n").path(), &[]).unwrap_err()).contains("no data rows"));
    }

    #[test]
    fn blank_cell_is_located() {
        let e = message(ingest_csv(file("y,x\n1,2\n3,\n").path(), &[]).unwrap_err());
        assert!(e.contains("line 3") && e.contains("'x'") && e.contains("blank"), "{e}");
    }

    #[test]
    fn ragged_row_names_line() {
        let e = message(ingest_csv(file("y,x\n1,2\n3,4,5\n").path(), &[]).unwrap_err());
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn missing_column() {
        let e = message(ingest_csv(file("a\n1\n").path(), &["y"]).unwrap_err());
        assert!(e.contains("'y'"), "{e}");
    }

    #[test]
    fn weights_dense_and_coordinate_agree() {
        let dense = file("0,1,0\n1,0,1\n0,1,0\n");
        let coord = file("i,j,weight\n0,1,1\n1,0,1\n1,2,1\n2,1,1\n");
        let a = ingest_weights(dense.path(), 3).unwrap();
        let b = ingest_weights(coord.path(), 3).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        let headed = file("a,b,c\n0,1,0\n1,0,1\n0,1,0\n");
        assert_eq!(ingest_weights(headed.path(), 3).unwrap().matrix(), a.matrix());
    }

    #[test]
    fn weights_index_out_of_range() {
        let e = message(ingest_weights(file("i,j,weight\n0,3,1\n").path(), 3).unwrap_err());
        assert!(e.contains("line 2"), "{e}");
    }
}
