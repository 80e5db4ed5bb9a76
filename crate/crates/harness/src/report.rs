//! Writing `<prefix>.json`, `<prefix>.csv` and `<prefix>.meta.json`.
//! The first two depend only on the config and seed; run metadata such as
//! timestamps and wall-clock times goes to the third.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use crate::error::{HarnessError, Result};
use crate::experiments::Outcome;
use crate::pool::worker_count;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn with_suffix(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}{suffix}"))
}

/// Paths written, in order: report, table, metadata.
pub fn write_outputs(prefix: &str, outcome: &Outcome, started: SystemTime) -> Result<[PathBuf; 3]> {
    let report_path = with_suffix(prefix, ".json");
    if let Some(dir) = report_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut text = serde_json::to_string_pretty(&outcome.report).map_err(|source| HarnessError::Json {
        path: report_path.clone(),
        source,
    })?;
    text.push('\n');
    std::fs::write(&report_path, text).map_err(io_err(&report_path))?;

    let table_path = with_suffix(prefix, ".csv");
    let csv_err = |source| HarnessError::Csv {
        path: table_path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&table_path).map_err(csv_err)?;
    w.write_record(&outcome.table.header).map_err(csv_err)?;
    for row in &outcome.table.rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&table_path))?;

    let meta_path = with_suffix(prefix, ".meta.json");
    let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let meta = json!({
        "started_unix": secs(started),
        "finished_unix": secs(SystemTime::now()),
        "threads": worker_count(),
        "timings_seconds": outcome.timings,
        "diagnostics": outcome.diagnostics,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(&meta_path, text + "\n").map_err(io_err(&meta_path))?;
    Ok([report_path, table_path, meta_path])
}
