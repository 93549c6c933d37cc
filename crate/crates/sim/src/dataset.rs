//! Labeled CSV files such as the bundled Iris data.
//!
//! All columns except the label column must be numeric. A header row is
//! detected when the first row has a non-numeric feature cell. Labels are
//! arbitrary strings mapped to class indices in order of first appearance.

use std::io::Read;
use std::path::Path;

use wola_core::data::LabeledDataset;

use crate::error::{io_err, Result, SimError};

/// Iris as shipped with the repository.
pub const IRIS_CSV: &str = include_str!("../data/iris.csv");

#[derive(Debug, Clone)]
pub struct CsvDataset {
    pub data: LabeledDataset,
    pub class_names: Vec<String>,
    /// Empty when the file has no header.
    pub feature_names: Vec<String>,
}

/// Which column holds the labels: a header name or a zero-based index.
/// `None` selects the last column.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<CsvDataset> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    parse_csv(file, label_column).map_err(|e| match e {
        SimError::Csv { line, message } => SimError::Parse {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        },
        other => other,
    })
}

pub fn parse_csv<R: Read>(reader: R, label_column: Option<&str>) -> Result<CsvDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| SimError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push(rec);
    }
    let first = records.first().ok_or(SimError::Csv {
        line: 1,
        message: "no rows".into(),
    })?;
    let width = first.len();
    if width < 2 {
        return Err(SimError::Csv {
            line: line_of(first),
            message: "need at least one feature column and a label column".into(),
        });
    }

    let header_guess = |label: usize| {
        first
            .iter()
            .enumerate()
            .any(|(k, cell)| k != label && cell.parse::<f64>().is_err())
    };
    let (label, has_header) = match label_column {
        None => (width - 1, header_guess(width - 1)),
        Some(name) => match name.parse::<usize>() {
            Ok(k) if k < width => (k, header_guess(k)),
            Ok(k) => {
                return Err(SimError::Csv {
                    line: line_of(first),
                    message: format!("label column {k} out of range for {width} columns"),
                })
            }
            Err(_) => {
                let k = first.iter().position(|c| c == name).ok_or_else(|| SimError::Csv {
                    line: line_of(first),
                    message: format!("no column named '{name}' in the header"),
                })?;
                (k, true)
            }
        },
    };

    let feature_names = if has_header {
        first
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != label)
            .map(|(_, c)| c.to_string())
            .collect()
    } else {
        Vec::new()
    };
    let body = if has_header { &records[1..] } else { &records[..] };
    if body.is_empty() {
        return Err(SimError::Csv {
            line: line_of(first),
            message: "header but no data rows".into(),
        });
    }

    let mut features = Vec::with_capacity(body.len() * (width - 1));
    let mut labels = Vec::with_capacity(body.len());
    let mut class_names: Vec<String> = Vec::new();
    for rec in body {
        let line = line_of(rec);
        if rec.len() != width {
            return Err(SimError::Csv {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (k, cell) in rec.iter().enumerate() {
            if k == label {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| SimError::Csv {
                line,
                message: format!("column {}: '{cell}' is not a number", k + 1),
            })?;
            if !v.is_finite() {
                return Err(SimError::Csv {
                    line,
                    message: format!("column {}: non-finite value", k + 1),
                });
            }
            features.push(v);
        }
        let name = &rec[label];
        let y = match class_names.iter().position(|c| c == name) {
            Some(y) => y,
            None => {
                class_names.push(name.to_string());
                class_names.len() - 1
            }
        };
        labels.push(y);
    }
    if class_names.is_empty() {
        return Err(SimError::Csv {
            line: line_of(first),
            message: "no samples".into(),
        });
    }
    let data = LabeledDataset::new(features, width - 1, labels, class_names.len())?;
    Ok(CsvDataset {
        data,
        class_names,
        feature_names,
    })
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}
