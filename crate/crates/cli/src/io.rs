//! CSV artifacts and the unit conversions at the file boundary.

use std::path::{Path, PathBuf};

use cqed_core::fitting::{GCurve, GSource, LinewidthTable};
use cqed_core::lineshape::{read_pairs_csv, SampledCurve};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Picoseconds per nanosecond.
pub const PS_PER_NS: f64 = 1e3;

pub fn read_curve(path: &Path) -> Result<SampledCurve, Failure> {
    Ok(SampledCurve::from_csv(path)?)
}

/// A (ps, counts) histogram on the core's ns axis.
pub fn read_time_curve(path: &Path) -> Result<SampledCurve, Failure> {
    Ok(read_curve(path)?.rescale_axis(1.0 / PS_PER_NS))
}

pub fn write_time_curve(path: &Path, c: &SampledCurve, value_name: &str) -> Result<(), Failure> {
    Ok(c.rescale_axis(PS_PER_NS).to_csv(path, ("time_ps", value_name))?)
}

fn csv_failure(path: &Path, e: csv::Error) -> Failure {
    if let csv::ErrorKind::Io(io) = e.kind() {
        if io.kind() == std::io::ErrorKind::NotFound {
            return Failure::input("input_not_found", format!("{}: {e}", path.display()));
        }
    }
    Failure::input("input_invalid", format!("{}: {e}", path.display()))
}

fn write_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::input("io_error", format!("{}: {e}", path.display()))
}

/// Writes serializable rows with a header taken from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_failure(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| write_failure(path, e))?;
    }
    w.flush().map_err(|e| write_failure(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    sigma_sd_uev: f64,
    gamma1_uev: f64,
    gamma2_uev: f64,
    ssr: f64,
    converged: bool,
}

pub fn write_table(path: &Path, t: &LinewidthTable) -> Result<(), Failure> {
    let rows: Vec<TableRow> = (0..t.sigma_sd_grid.len())
        .map(|i| TableRow {
            sigma_sd_uev: t.sigma_sd_grid[i],
            gamma1_uev: t.gamma1[i],
            gamma2_uev: t.gamma2[i],
            ssr: t.ssr[i],
            converged: t.converged[i],
        })
        .collect();
    write_rows(path, &rows)
}

pub fn read_table(path: &Path) -> Result<LinewidthTable, Failure> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_failure(path, e))?;
    let rows: Vec<TableRow> = r
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| csv_failure(path, e))?;
    let col = |f: fn(&TableRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    LinewidthTable::new(
        col(|r| r.sigma_sd_uev),
        col(|r| r.gamma1_uev),
        col(|r| r.gamma2_uev),
        col(|r| r.ssr),
        rows.iter().map(|r| r.converged).collect(),
    )
    .map_err(|e| Failure::input("input_invalid", format!("{}: {e}", path.display())))
}

pub fn write_g_curve(path: &Path, c: &GCurve) -> Result<(), Failure> {
    let rows: Vec<(f64, f64)> = c.gamma_axis.iter().copied().zip(c.g_values.iter().copied()).collect();
    Ok(cqed_core::lineshape::write_pairs_csv(path, ("linewidth_uev", "g_uev"), &rows)?)
}

pub fn read_g_curve(path: &Path, source: GSource) -> Result<GCurve, Failure> {
    let (x, y): (Vec<f64>, Vec<f64>) = read_pairs_csv(path)?.into_iter().unzip();
    GCurve::new(x, y, source).map_err(|e| Failure::input("input_invalid", format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).expect("JSON value serializes");
    std::fs::write(path, text + "\n").map_err(|e| write_failure(path, e))
}

/// Output directory, created on first use; artifacts are skipped without one.
pub struct Artifacts {
    dir: Option<PathBuf>,
    pub written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: Option<&Path>) -> Result<Self, Failure> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(|e| write_failure(d, e))?;
        }
        Ok(Self {
            dir: dir.map(Path::to_path_buf),
            written: Vec::new(),
        })
    }

    /// Runs `write` on `dir/name` when an output directory is set.
    pub fn emit(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<(), Failure>) -> Result<(), Failure> {
        if let Some(d) = &self.dir {
            let p = d.join(name);
            write(&p)?;
            self.written.push(p.display().to_string());
        }
        Ok(())
    }
}
