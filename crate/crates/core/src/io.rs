//! CSV ingestion, result tables and run manifests.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{Method, RegionResult};
use crate::mc::CoverageRecord;
use crate::model::Dataset;

pub const INTERCEPT_LABEL: &str = "(intercept)";

/// Column order of coverage tables. Bump [`COVERAGE_SCHEMA_VERSION`] when
/// this changes.
pub const COVERAGE_COLUMNS: [&str; 9] = [
    "scenario", "method", "n", "reps", "covered", "degenerate", "coverage", "mc_stderr", "seed",
];
pub const COVERAGE_SCHEMA_VERSION: u32 = 1;

const MISSING: [&str; 6] = ["", "NA", "na", "NaN", "nan", "."];

#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub data: Dataset,
    /// Rows removed by listwise deletion.
    pub dropped: usize,
    pub response: String,
}

/// Reads `response` and `covariates` from a headed CSV, dropping every row
/// with a missing value in a selected column.
pub fn load_csv(
    path: impl AsRef<Path>,
    response: &str,
    covariates: &[String],
    add_intercept: bool,
) -> Result<LoadedCsv> {
    let file = fs::File::open(path.as_ref())?;
    read_csv(file, response, covariates, add_intercept)
}

pub fn read_csv<R: Read>(
    reader: R,
    response: &str,
    covariates: &[String],
    add_intercept: bool,
) -> Result<LoadedCsv> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column '{name}' not found")))
    };
    let mut names = vec![response.to_string()];
    names.extend(covariates.iter().cloned());
    let cols = names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let mut vals = Vec::with_capacity(cols.len());
        let mut missing = false;
        for (k, &c) in cols.iter().enumerate() {
            let cell = record.get(c).unwrap_or("");
            if MISSING.contains(&cell) {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: r + 1,
                column: names[k].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                missing = true;
            }
            vals.push(v);
        }
        if missing {
            dropped += 1;
        } else {
            rows.push(vals);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyData("no complete rows".into()));
    }

    let n = rows.len();
    let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let offset = usize::from(add_intercept);
    let p = covariates.len() + offset;
    let (x, labels) = if p == 0 {
        (None, None)
    } else {
        let mut x = DMatrix::zeros(n, p);
        for (i, r) in rows.iter().enumerate() {
            if add_intercept {
                x[(i, 0)] = 1.0;
            }
            for j in 0..covariates.len() {
                x[(i, j + offset)] = r[j + 1];
            }
        }
        let mut labels = Vec::with_capacity(p);
        if add_intercept {
            labels.push(INTERCEPT_LABEL.to_string());
        }
        labels.extend(covariates.iter().cloned());
        (Some(x), Some(labels))
    };
    let mut data = Dataset::new(y, x)?;
    if let Some(labels) = labels {
        data = data.with_labels(labels)?;
    }
    Ok(LoadedCsv {
        data,
        dropped,
        response: response.to_string(),
    })
}

/// Writes the response followed by every design column, at full precision.
pub fn write_dataset_csv<W: Write>(data: &Dataset, response: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let p = data.p_design();
    let labels: Vec<String> = match data.labels() {
        Some(l) => l.to_vec(),
        None => (1..=p).map(|j| format!("x{j}")).collect(),
    };
    let mut header = vec![response.to_string()];
    header.extend(labels);
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut row = vec![fmt_f64(data.y()[i])];
        if let Some(x) = data.x() {
            row.extend(x.row(i).iter().map(|v| fmt_f64(*v)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_coverage_csv<W: Write>(records: &[CoverageRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COVERAGE_COLUMNS)?;
    for r in records {
        w.write_record([
            r.scenario.clone(),
            r.method.to_string(),
            r.n.to_string(),
            r.reps.to_string(),
            r.covered.to_string(),
            r.degenerate.to_string(),
            fmt_f64(r.coverage()),
            fmt_f64(r.mc_stderr()),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One parsed coverage row, including the derived columns as written.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CoverageRow {
    pub scenario: String,
    pub method: Method,
    pub n: usize,
    pub reps: usize,
    pub covered: usize,
    pub degenerate: usize,
    pub coverage: f64,
    pub mc_stderr: f64,
    pub seed: u64,
}

impl CoverageRow {
    pub fn record(&self) -> CoverageRecord {
        CoverageRecord {
            scenario: self.scenario.clone(),
            method: self.method,
            n: self.n,
            reps: self.reps,
            covered: self.covered,
            degenerate: self.degenerate,
            seed: self.seed,
        }
    }
}

pub fn read_coverage_csv<R: Read>(reader: R) -> Result<Vec<CoverageRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(COVERAGE_COLUMNS) {
        return Err(Error::Config(format!(
            "unexpected coverage columns {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Boundary polyline of a two-parameter region, one row per direction.
pub fn write_boundary_csv<W: Write>(region: &RegionResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "direction", "u0", "u1", "radius", "theta0", "theta1"])?;
    for (k, bp) in region.boundary.iter().enumerate() {
        let (t0, t1, r) = match bp.radius {
            Some(r) => (
                region.center[0] - r * bp.direction[0],
                region.center[1] - r * bp.direction[1],
                r,
            ),
            None => (f64::NAN, f64::NAN, f64::INFINITY),
        };
        w.write_record([
            region.method.to_string(),
            k.to_string(),
            fmt_f64(bp.direction[0]),
            fmt_f64(bp.direction[1]),
            fmt_f64(r),
            fmt_f64(t0),
            fmt_f64(t1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `start:stop:step` (inclusive), a comma list, or a single size.
pub fn parse_grid(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad sample-size grid '{text}'"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let grid: Vec<usize> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let (start, stop, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 1),
            [a, b, c] => (num(a)?, num(b)?, num(c)?),
            _ => return Err(bad()),
        };
        if step == 0 || start > stop {
            return Err(bad());
        }
        (start..=stop).step_by(step).collect()
    } else {
        text.split(',').map(num).collect::<Result<_>>()?
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad());
    }
    Ok(grid)
}

/// Provenance sidecar written next to every result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub schema_version: u32,
    pub created_unix: u64,
    pub assumptions: Vec<String>,
    pub output: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: COVERAGE_SCHEMA_VERSION,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            assumptions: Vec::new(),
            output: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes `bytes` to a temporary file beside `path`, then renames it.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Writes a result file plus its manifest sidecar, both atomically.
pub fn write_with_manifest(path: &Path, bytes: &[u8], manifest: &RunManifest) -> Result<()> {
    let mut manifest = manifest.clone();
    manifest.output = path.file_name().map(|f| f.to_string_lossy().into_owned());
    atomic_write(path, bytes)?;
    atomic_write(&manifest_path(path), manifest.to_json()?.as_bytes())
}
