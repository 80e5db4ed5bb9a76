//! Dataset CSV format: a header row, one column per feature, and the
//! target in the last column.

use std::path::Path;

use idm_core::Dataset;

use crate::error::{HarnessError, Result, StageExt};

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let width = reader.headers().map_err(csv_err)?.len();
    if width == 0 {
        return Err(HarnessError::Config(format!("{}: no columns", path.display())));
    }
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                HarnessError::Config(format!(
                    "{}: row {}, column {}: `{field}` is not a number",
                    path.display(),
                    line + 1,
                    col + 1
                ))
            })?;
            if col + 1 == width {
                targets.push(v);
            } else {
                features.push(v);
            }
        }
    }
    Dataset::from_flat(width - 1, features, targets).stage("load data")
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    let p = data.input_dim();
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    writer.write_record(&header).map_err(csv_err)?;
    for i in 0..data.len() {
        let row: Vec<String> = data
            .x(i)
            .iter()
            .chain(std::iter::once(&data.y(i)))
            .map(|v| format!("{v:?}"))
            .collect();
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}
