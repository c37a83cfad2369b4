//! CSV input and output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("column '{column}' not found in {}; available columns: {available}", path.display())]
    MissingColumn {
        path: PathBuf,
        column: String,
        available: String,
    },

    #[error("column '{column}', row {row}: '{value}' is not a number")]
    NotNumeric { column: String, row: usize, value: String },

    #[error("column '{column}', row {row}: value {value} is not finite")]
    NonFinite { column: String, row: usize, value: f64 },

    #[error("malformed CSV in {}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },

    #[error("cannot read config {}: {source}", path.display())]
    ConfigRead { path: PathBuf, source: io::Error },

    #[error("invalid config {}: {source}", path.display())]
    ConfigParse {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Model(#[from] mbs::MbsError),

    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Observations read from a CSV file: one row per observation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub covariates: Vec<Vec<f64>>,
    pub response: Vec<f64>,
}

pub fn read_dataset(path: &Path, response: &str, covariates: &[String]) -> Result<Dataset> {
    if !path.is_file() {
        return Err(CliError::NotFound(path.to_path_buf()));
    }
    let csv_err = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
                available: headers.iter().collect::<Vec<_>>().join(", "),
            })
    };
    let y_col = column(response)?;
    let x_cols = covariates.iter().map(|c| column(c)).collect::<Result<Vec<_>>>()?;

    let mut data = Dataset { covariates: Vec::new(), response: Vec::new() };
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // header is line 1
        let row = i + 2;
        let field = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("").trim();
            let value: f64 = raw.parse().map_err(|_| CliError::NotNumeric {
                column: name.to_string(),
                row,
                value: raw.to_string(),
            })?;
            if !value.is_finite() {
                return Err(CliError::NonFinite { column: name.to_string(), row, value });
            }
            Ok(value)
        };
        data.response.push(field(y_col, response)?);
        data.covariates.push(
            x_cols
                .iter()
                .zip(covariates)
                .map(|(&c, name)| field(c, name))
                .collect::<Result<_>>()?,
        );
    }
    if data.response.is_empty() {
        return Err(CliError::Usage(format!("{} has no data rows", path.display())));
    }
    Ok(data)
}

/// Writes a header and rows of numbers, printed with round-trip precision.
pub fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let write_err = |source| CliError::Write { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(write_err)?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let to_io = |e: csv::Error| io::Error::other(e);
    writer.write_record(header).map_err(to_io).map_err(write_err)?;
    for row in rows {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .map_err(to_io)
            .map_err(write_err)?;
    }
    writer.flush().map_err(write_err)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let write_err = |source| CliError::Write { path: path.to_path_buf(), source };
    let mut file = File::create(path).map_err(write_err)?;
    file.write_all(text.as_bytes()).map_err(write_err)
}
