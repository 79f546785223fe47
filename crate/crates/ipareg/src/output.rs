//! CSV output. Floats are written in shortest round-trip form, so equal
//! traces give byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ipareg_core::control::RunTrace;
use thiserror::Error;

use crate::runner::RunReport;

pub const TRACE_HEADER: [&str; 7] = ["n", "u", "y", "e", "A", "deriv", "r"];
pub const PLOT_HEADER: [&str; 4] = ["n", "y", "r", "u"];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// One row per cycle: `n,u,y,e,A,deriv,r`. `A` is empty for cycle 1.
pub fn write_trace_csv<W: Write>(trace: &RunTrace, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for row in &trace.rows {
        let a = row.a.map(|a| a.to_string()).unwrap_or_default();
        w.write_record([
            row.n.to_string(),
            row.u.to_string(),
            row.y.to_string(),
            row.e.to_string(),
            a,
            row.deriv.to_string(),
            row.r.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plotting series `n,y,r,u`.
pub fn write_plot_csv<W: Write>(trace: &RunTrace, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLOT_HEADER)?;
    for row in &trace.rows {
        w.write_record([
            row.n.to_string(),
            row.y.to_string(),
            row.r.to_string(),
            row.u.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<fs::File, OutputError> {
    fs::File::create(path).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn emit_plot_data(report: &RunReport, path: &Path) -> Result<(), OutputError> {
    write_plot_csv(&report.trace, create(path)?).map_err(|source| OutputError::Csv {
        path: path.display().to_string(),
        source,
    })
}

/// Write `<stem>.csv` and `<stem>.plot.csv` for every report into `dir`.
pub fn write_reports(reports: &[RunReport], dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let multi_start = {
        let first = reports.first().map(|r| r.id.u1);
        reports.iter().any(|r| Some(r.id.u1) != first)
    };
    let mut written = Vec::with_capacity(2 * reports.len());
    for report in reports {
        let stem = report.file_stem(multi_start);
        let path = dir.join(format!("{stem}.csv"));
        write_trace_csv(&report.trace, create(&path)?).map_err(|source| OutputError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        written.push(path);
        let plot = dir.join(format!("{stem}.plot.csv"));
        emit_plot_data(report, &plot)?;
        written.push(plot);
    }
    Ok(written)
}
