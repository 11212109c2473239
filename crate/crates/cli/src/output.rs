//! Result files.
//!
//! A run or sweep writes into one directory:
//!
//! - `results.csv`: one [`ResultRow`] per line after a header row. Missing
//!   values (an interval from a single replication, a convergence time when
//!   no replication converged) are empty fields.
//! - `results.json`: the same rows as an array of objects, `null` for
//!   missing values.
//! - `series/<variant-mix>.csv`: `slot_index,fraction`, the cumulative
//!   fraction of collision slots averaged over replications.
//! - `scenario.toml`: the resolved scenario, defaults included.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::scenario::{Point, Scenario};
use crate::sweep::{PointResult, ResultRow, SweepError, SweepSink};

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> SweepError {
    let context = context.into();
    move |source| SweepError::Io { context, source }
}

fn csv_err(context: impl Into<String>) -> impl FnOnce(csv::Error) -> SweepError {
    let context = context.into();
    move |source| SweepError::Csv { context, source }
}

/// Write rows as CSV with a header.
pub fn write_rows_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(ROW_COLUMNS).map_err(csv_err("writing CSV header"))?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_err("writing result row"))?;
    }
    w.flush().map_err(io_err("flushing CSV"))
}

/// Column names of [`ResultRow`], in output order.
pub const ROW_COLUMNS: [&str; 14] = [
    "scenario",
    "n",
    "variant_mix",
    "replications",
    "slots",
    "throughput_mbps_mean",
    "throughput_mbps_ci95",
    "jfi_mean",
    "jfi_ci95",
    "collision_fraction_mean",
    "attempt_collision_prob_mean",
    "convergence_rate",
    "mean_slots_to_convergence",
    "median_slots_to_convergence",
];

pub fn write_rows_json<W: Write>(mut out: W, rows: &[ResultRow]) -> Result<(), SweepError> {
    serde_json::to_writer_pretty(&mut out, rows).map_err(|source| SweepError::Json {
        context: "writing JSON rows".into(),
        source,
    })?;
    writeln!(out).map_err(io_err("writing JSON rows"))
}

#[derive(Serialize)]
struct SeriesRecord {
    slot_index: u64,
    fraction: f64,
}

pub fn write_series_csv<W: Write>(out: W, series: &[(u64, f64)]) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    if series.is_empty() {
        w.write_record(["slot_index", "fraction"]).map_err(csv_err("writing series header"))?;
    }
    for &(slot_index, fraction) in series {
        w.serialize(SeriesRecord { slot_index, fraction })
            .map_err(csv_err("writing series"))?;
    }
    w.flush().map_err(io_err("flushing series"))
}

/// File name of a point's series, e.g. `csma-ca_5+eca-hyst-fs_5.csv`.
pub fn series_file_name(point: &Point) -> String {
    format!("{}.csv", point.label().replace(':', "_"))
}

fn create(path: &Path) -> Result<BufWriter<File>, SweepError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(io_err(format!("creating {}", path.display())))
}

/// Writes the directory layout described in the module docs.
pub struct DirSink {
    dir: PathBuf,
}

impl DirSink {
    /// Create `dir` and its `series` subdirectory, and record the scenario.
    pub fn create(dir: impl Into<PathBuf>, scenario: &Scenario) -> Result<Self, SweepError> {
        let dir = dir.into();
        let series = dir.join("series");
        fs::create_dir_all(&series).map_err(io_err(format!("creating {}", series.display())))?;
        let path = dir.join("scenario.toml");
        fs::write(&path, scenario.to_toml()).map_err(io_err(format!("writing {}", path.display())))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl SweepSink for DirSink {
    fn point(&mut self, result: &PointResult) -> Result<(), SweepError> {
        let path = self.dir.join("series").join(series_file_name(&result.point));
        write_series_csv(create(&path)?, &result.mean_series)
    }

    fn finish(&mut self, rows: &[ResultRow]) -> Result<(), SweepError> {
        write_rows_csv(create(&self.dir.join("results.csv"))?, rows)?;
        write_rows_json(create(&self.dir.join("results.json"))?, rows)
    }
}
