// SPDX-License-Identifier: Apache-2.0

//! CSV and JSON writers. Floats are written with 17 significant digits so
//! a reader recovers the exact binary value.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classical::{Band, ClassicalTrajectory};
use crate::dynamics::TrajectoryRecord;
use crate::error::Result;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a header and rows of pre-formatted fields.
pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `t,mu_1[,mu_2...],energy,trace_err,herm_err,purity`.
pub fn write_trajectory_csv(path: &Path, rec: &TrajectoryRecord) -> Result<()> {
    let n_mu = rec.mu.first().map_or(0, Vec::len);
    let mut head = vec!["t".to_string()];
    head.extend((1..=n_mu).map(|a| format!("mu_{a}")));
    head.extend(header(&["energy", "trace_err", "herm_err", "purity"]));
    let rows = (0..rec.len()).map(|k| {
        let mut row = vec![fmt_f64(rec.times[k])];
        row.extend(rec.mu[k].iter().map(|&m| fmt_f64(m)));
        row.extend(
            [
                rec.energy[k],
                rec.trace_err[k],
                rec.herm_err[k],
                rec.purity[k],
            ]
            .iter()
            .map(|&v| fmt_f64(v)),
        );
        row
    });
    write_csv(path, &head, rows)
}

/// `t,mu1,mu2,energy`.
pub fn write_classical_csv(path: &Path, traj: &ClassicalTrajectory) -> Result<()> {
    let rows = (0..traj.times.len()).map(|k| {
        [traj.times[k], traj.mu1[k], traj.mu2[k], traj.energy[k]]
            .iter()
            .map(|&v| fmt_f64(v))
            .collect()
    });
    write_csv(path, &header(&["t", "mu1", "mu2", "energy"]), rows)
}

/// `n,omega_min,omega_max`.
pub fn write_band_csv(path: &Path, bands: &[Band]) -> Result<()> {
    let rows = bands
        .iter()
        .map(|b| vec![b.n.to_string(), fmt_f64(b.omega_min), fmt_f64(b.omega_max)]);
    write_csv(path, &header(&["n", "omega_min", "omega_max"]), rows)
}

/// One row of a bound-state scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub x: f64,
    pub n_b_total: usize,
    pub n_b_even: usize,
    /// Ascending bound-state energies.
    pub energies: Vec<f64>,
}

/// `x,n_b_total,n_b_even,E_0,E_1,...`; rows with fewer bound states leave
/// the trailing energy fields empty.
pub fn write_spectrum_csv(path: &Path, rows: &[SpectrumRow]) -> Result<()> {
    let width = rows
        .iter()
        .map(|r| r.energies.len())
        .max()
        .unwrap_or(0)
        .max(1);
    let mut head = header(&["x", "n_b_total", "n_b_even"]);
    head.extend((0..width).map(|k| format!("E_{k}")));
    let out = rows.iter().map(|r| {
        let mut row = vec![
            fmt_f64(r.x),
            r.n_b_total.to_string(),
            r.n_b_even.to_string(),
        ];
        row.extend((0..width).map(|k| r.energies.get(k).map_or(String::new(), |&e| fmt_f64(e))));
        row
    });
    write_csv(path, &head, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub label: String,
    pub parameter: f64,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Paths relative to the output directory.
    pub files: Vec<PathBuf>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub config: serde_json::Value,
    pub runs: Vec<RunEntry>,
    /// Aggregated outputs, relative to the output directory.
    pub outputs: Vec<PathBuf>,
    /// Named pass/fail checks evaluated on the results.
    pub verification: BTreeMap<String, bool>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)?,
            runs: Vec::new(),
            outputs: Vec::new(),
            verification: BTreeMap::new(),
        })
    }

    pub fn all_succeeded(&self) -> bool {
        self.runs.iter().all(|r| r.status == RunStatus::Ok)
    }

    pub fn n_failed(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| r.status == RunStatus::Failed)
            .count()
    }
}
