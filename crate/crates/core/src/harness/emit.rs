//! Result files: `results.csv`, `results.jsonl` and `manifest.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{ExperimentOutcome, ExperimentSpec, ResultRecord};
use crate::error::{Error, Result};

/// CSV header, in column order. Gross rates are in bits/s/Hz; `net_*`
/// columns apply the data fraction and pilot overhead. Empty cells mark
/// bounds or diagnostics that were not requested. Matches the field order
/// of [`ResultRecord`].
pub const CSV_COLUMNS: [&str; 26] = [
    "placement",
    "ue",
    "seed",
    "seed_path",
    "pilot_policy",
    "power_policy",
    "ul_pilot",
    "dl_pilot",
    "cluster_size",
    "cf",
    "scsi",
    "ub",
    "unf",
    "lb",
    "net_cf",
    "net_scsi",
    "net_ub",
    "net_unf",
    "net_lb",
    "unf_std_err",
    "lb_std_err",
    "unf_excluded",
    "sca_iterations",
    "sca_solves",
    "sca_failures",
    "min_sinr",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Parse { path: path.to_path_buf(), message: e.to_string() }
}

pub fn write_csv(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    w.write_record(CSV_COLUMNS).map_err(csv_err(path))?;
    for r in records {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::Parse { path: path.to_path_buf(), message: "unexpected CSV header".into() });
    }
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

pub fn write_jsonl(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line =
            serde_json::to_string(r).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub seed: u64,
    pub git_describe: String,
    pub crate_version: String,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub records: usize,
    pub failures: Vec<(usize, String)>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

pub fn write_manifest(
    path: &Path,
    spec: &ExperimentSpec,
    outcome: &ExperimentOutcome,
    started_unix_s: u64,
) -> Result<()> {
    let manifest = Manifest {
        spec: spec.clone(),
        seed: spec.seed(),
        git_describe: git_describe(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        started_unix_s,
        finished_unix_s: unix_now(),
        records: outcome.records.len(),
        failures: outcome.failures.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    std::fs::write(path, text).map_err(io_err(path))
}

/// Writes all three result files into `dir`, creating it if needed.
pub fn write_outputs(
    dir: &Path,
    spec: &ExperimentSpec,
    outcome: &ExperimentOutcome,
    started_unix_s: u64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv = dir.join("results.csv");
    let jsonl = dir.join("results.jsonl");
    let manifest = dir.join("manifest.json");
    write_csv(&csv, &outcome.records)?;
    write_jsonl(&jsonl, &outcome.records)?;
    write_manifest(&manifest, spec, outcome, started_unix_s)?;
    Ok(vec![csv, jsonl, manifest])
}
