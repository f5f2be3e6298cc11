use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{ExperimentConfig, ExperimentResult, ReportRow, ReportTable};

/// Columns of `table.csv`, format version 1.
pub const TABLE_HEADER: [&str; 10] = [
    "piece",
    "cycle",
    "n",
    "m",
    "delta",
    "max_surrogate",
    "rb_truth",
    "rb_l2",
    "ratio",
    "ratio_kind",
];

/// Columns of `decay.csv`, format version 1.
pub const DECAY_HEADER: [&str; 4] = ["piece", "cycle", "n", "max_surrogate"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let kind = if e.is_io_error() {
        std::io::ErrorKind::Other
    } else {
        std::io::ErrorKind::InvalidData
    };
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(kind, e.to_string()),
    }
}

fn table_csv(table: &ReportTable, path: &Path) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(TABLE_HEADER).map_err(|e| csv_err(path, e))?;
    for row in &table.rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.into_inner()
        .map_err(|e| csv_err(path, e.into_error().into()))
}

fn decay_csv(table: &ReportTable, path: &Path) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DECAY_HEADER).map_err(|e| csv_err(path, e))?;
    for r in &table.rows {
        w.serialize((r.piece, r.cycle, r.n, r.max_surrogate))
            .map_err(|e| csv_err(path, e))?;
    }
    w.into_inner()
        .map_err(|e| csv_err(path, e.into_error().into()))
}

/// Writes the result files into `dir` (created if missing) and returns
/// their paths.
pub fn emit_outputs(
    cfg: &ExperimentConfig,
    result: &ExperimentResult,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let table_path = dir.join("table.csv");
    let history_path = dir.join("history.json");
    let decay_path = dir.join("decay.csv");
    let config_path = dir.join("config.toml");
    let mut history = serde_json::to_vec_pretty(&result.history).map_err(|e| Error::Io {
        path: history_path.clone(),
        source: e.into(),
    })?;
    history.push(b'\n');
    let files = [
        (table_path.clone(), table_csv(&result.table, &table_path)?),
        (history_path, history),
        (decay_path.clone(), decay_csv(&result.table, &decay_path)?),
        (config_path, cfg.to_toml_string().into_bytes()),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        fs::write(&path, bytes).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a `table.csv` written by [`emit_outputs`].
pub fn read_table_csv(path: &Path) -> Result<ReportTable> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(TABLE_HEADER.iter().copied()) {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, "unexpected table header"),
        });
    }
    let rows = r
        .deserialize::<ReportRow>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_err(path, e))?;
    Ok(ReportTable { rows })
}
