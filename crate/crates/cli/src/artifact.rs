//! Run artifacts: summary JSON, timing JSON and CSV tables.
//!
//! `summary.json` depends only on the command and the scenario, so identical inputs
//! give identical bytes. Wall-clock time lives in `timing.json`.

use std::path::{Path, PathBuf};

use qparctl_core::estimates::linf_decay_report;
use qparctl_core::null_control::ControlSchedule;
use qparctl_core::pde::{norms, DiffusionSpec, Trajectory};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{output_err, CliError};
use crate::scenario::Scenario;

pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";
pub const FORMAT_VERSION: u32 = 1;

pub const TIMESERIES_HEADER: [&str; 7] = ["t", "m", "e", "l2", "h1", "linf_bound", "u_linf"];
pub const SLAB_HEADER: [&str; 4] = ["x", "t", "y", "u"];

/// Full-precision decimal: shortest representation that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Invalid,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Self {
            file: file.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|&v| fmt_f64(v)).collect());
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(&self.file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Output {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let fail = |e: csv::Error| CliError::Output {
            path: path.clone(),
            message: e.to_string(),
        };
        w.write_record(&self.header).map_err(fail)?;
        for row in &self.rows {
            w.write_record(row).map_err(fail)?;
        }
        w.flush().map_err(output_err(&path))?;
        Ok(path)
    }
}

/// Everything a command produces.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub command: String,
    /// Extra inputs folded into the hash (sweep axes).
    pub hash_salt: String,
    pub scenario: Scenario,
    pub status: Status,
    pub error: Option<ErrorRecord>,
    pub results: Map<String, Value>,
    pub tables: Vec<Table>,
}

#[derive(Serialize)]
struct Summary<'a> {
    format_version: u32,
    command: &'a str,
    status: Status,
    exit_code: i32,
    error: &'a Option<ErrorRecord>,
    input_hash: String,
    scenario: Value,
    results: &'a Map<String, Value>,
    files: Vec<&'a str>,
}

/// Hex SHA-256 over the command label and the canonical TOML form of the scenario.
pub fn input_hash(command: &str, scenario: &Scenario) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(b"\n");
    h.update(scenario.to_toml().as_bytes());
    hex::encode(h.finalize())
}

impl Artifact {
    pub fn new(command: &str, scenario: &Scenario) -> Self {
        Self {
            command: command.into(),
            hash_salt: String::new(),
            scenario: scenario.clone(),
            status: Status::Ok,
            error: None,
            results: Map::new(),
            tables: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("result values serialize");
        self.results.insert(key.into(), v);
    }

    pub fn table_mut(&mut self, file: &str) -> &mut Table {
        self.tables
            .iter_mut()
            .find(|t| t.file == file)
            .unwrap_or_else(|| panic!("table {file} not declared"))
    }

    pub fn record_error(&mut self, err: &CliError) {
        self.status = if err.exit_code() == 1 { Status::Invalid } else { Status::Failed };
        self.error = Some(ErrorRecord {
            kind: err.kind().into(),
            message: err.to_string(),
        });
    }

    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Ok => 0,
            Status::Invalid => 1,
            Status::Failed => 2,
        }
    }

    pub fn summary_json(&self, csv: bool) -> String {
        let summary = Summary {
            format_version: FORMAT_VERSION,
            command: &self.command,
            status: self.status,
            exit_code: self.exit_code(),
            error: &self.error,
            input_hash: input_hash(&format!("{}{}", self.command, self.hash_salt), &self.scenario),
            scenario: serde_json::to_value(&self.scenario).expect("scenario serializes"),
            results: &self.results,
            files: if csv {
                self.tables.iter().map(|t| t.file.as_str()).collect()
            } else {
                Vec::new()
            },
        };
        let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
        s.push('\n');
        s
    }

    /// Writes the requested formats into `dir`, creating it if needed. `validate` leaves
    /// only its summary.
    pub fn write(&self, dir: &Path, csv: bool, summary: bool, wall_seconds: f64) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(output_err(dir))?;
        if csv {
            for t in &self.tables {
                t.write(dir)?;
            }
        }
        if summary {
            let path = dir.join(SUMMARY_FILE);
            std::fs::write(&path, self.summary_json(csv)).map_err(output_err(&path))?;
        }
        if self.command == "validate" {
            return Ok(());
        }
        let timing = serde_json::json!({ "command": self.command, "wall_seconds": wall_seconds });
        let path = dir.join(TIMING_FILE);
        std::fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&timing).unwrap()))
            .map_err(output_err(&path))?;
        Ok(())
    }
}

/// One row per time level: `M(t)`, `E(t)`, norms, the `t^{-1/2}` bound and `||u(t)||_∞`.
pub fn fill_timeseries(table: &mut Table, traj: &Trajectory, spec: &DiffusionSpec, control: Option<&ControlSchedule>) {
    let g = traj.grid();
    let dx = g.dx();
    let report = linf_decay_report(traj, spec, norms::l2(traj.level(0), dx));
    for k in 0..g.n_levels() {
        let y = traj.level(k);
        let u = control.map_or(0.0, |c| norms::linf(c.values().level(k)));
        table.push_f64(&[
            report.times[k],
            report.m_profile[k],
            report.e_profile[k],
            norms::l2(y, dx),
            norms::h1(y, dx),
            report.linf_bound_profile[k],
            u,
        ]);
    }
}

/// `(x, t, y, u)` on every `stride`-th level and the final level, all nodes.
pub fn fill_slab(table: &mut Table, traj: &Trajectory, control: Option<&ControlSchedule>, stride: usize) {
    let g = traj.grid();
    let last = g.n_t();
    for k in (0..=last).filter(|k| k % stride == 0 || *k == last) {
        let t = g.t(k);
        for (i, &y) in traj.level(k).iter().enumerate() {
            let u = control.map_or(0.0, |c| c.values().get(k, i));
            table.push_f64(&[g.x(i), t, y, u]);
        }
    }
}
