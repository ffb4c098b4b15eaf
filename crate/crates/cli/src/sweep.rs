//! Cross-product sweeps over scenario fields. Cells share nothing and write to their
//! own directories; results are collected in cell order whatever the worker count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::artifact::{fmt_f64, Artifact, Status, Table};
use crate::commands::{run_scenario, Command};
use crate::error::{output_err, CliError};
use crate::scenario::Scenario;

/// `path=v1,v2,...` where `path` is a dotted scenario key and each value is a TOML literal
/// (bare words fall back to strings).
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub path: String,
    pub values: Vec<toml::Value>,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(spec: &str) -> Result<Self, String> {
        let (path, raw) = spec
            .split_once('=')
            .ok_or_else(|| format!("axis `{spec}` must look like key.path=v1,v2"))?;
        let path = path.trim();
        if path.is_empty() || path.split('.').any(str::is_empty) {
            return Err(format!("axis `{spec}` has an empty key"));
        }
        let values: Vec<toml::Value> = raw.split(',').map(|v| parse_value(v.trim())).collect();
        if raw.trim().is_empty() {
            return Err(format!("axis `{spec}` has no values"));
        }
        Ok(Axis {
            path: path.into(),
            values,
        })
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.into()))
}

fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), CliError> {
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().expect("axis paths are non-empty");
    let mut table = root;
    for key in keys {
        let entry = table
            .entry(key)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Validation(format!("axis key `{path}`: `{key}` is not a table")))?;
    }
    table.insert(last.into(), value);
    Ok(())
}

/// Scenario with every `(path, value)` applied, re-validated through the schema.
pub fn apply(template: &Scenario, assignment: &[(&str, &toml::Value)]) -> Result<Scenario, CliError> {
    let mut root = toml::Table::try_from(template).expect("scenario serializes to TOML");
    for (path, value) in assignment {
        set_path(&mut root, path, (*value).clone())?;
    }
    let text = toml::to_string(&root).expect("table serializes");
    Scenario::from_toml(&text, "sweep cell")
}

/// Row-major cross product; the first axis varies slowest.
pub fn cells(axes: &[Axis]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..axis.values.len()).map(move |j| {
                    let mut p = prefix.clone();
                    p.push(j);
                    p
                })
            })
            .collect();
    }
    out
}

pub fn cell_dir(sweep_dir: &Path, index: usize) -> PathBuf {
    sweep_dir.join(format!("cell_{index:03}"))
}

pub struct CellOutcome {
    pub index: usize,
    pub values: Vec<toml::Value>,
    pub artifact: Artifact,
}

/// Result fields copied into `aggregate.csv` when present.
pub const AGGREGATE_METRICS: [&str; 8] = [
    "t_star",
    "linf_u",
    "terminal_norm",
    "terminal_ratio",
    "c1_ratio",
    "c2_ratio",
    "max_ratio",
    "outer_iterations",
];

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub workers: usize,
    pub csv: bool,
    pub summary: bool,
}

/// Runs every cell and writes cell artifacts, `aggregate.csv` and the sweep summary into
/// `sweep_dir`. Cell failures are recorded and do not stop the sweep.
pub fn run_sweep(
    template: &Scenario,
    command: Command,
    axes: &[Axis],
    sweep_dir: &Path,
    opts: SweepOptions,
) -> Result<Artifact, CliError> {
    let grid = cells(axes);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| CliError::Validation(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<CellOutcome, CliError>> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(index, choice)| {
                let values: Vec<toml::Value> = axes.iter().zip(choice).map(|(a, &j)| a.values[j].clone()).collect();
                let assignment: Vec<(&str, &toml::Value)> =
                    axes.iter().map(|a| a.path.as_str()).zip(values.iter()).collect();
                let artifact = match apply(template, &assignment) {
                    Ok(s) => {
                        let start = std::time::Instant::now();
                        let art = run_scenario(command, &s);
                        art.write(&cell_dir(sweep_dir, index), opts.csv, opts.summary, start.elapsed().as_secs_f64())?;
                        art
                    }
                    Err(e) => {
                        let mut art = Artifact::new(command.name(), template);
                        art.record_error(&e);
                        art.write(&cell_dir(sweep_dir, index), false, opts.summary, 0.0)?;
                        art
                    }
                };
                Ok(CellOutcome {
                    index,
                    values,
                    artifact,
                })
            })
            .collect()
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut header: Vec<String> = vec!["cell".into()];
    header.extend(axes.iter().map(|a| a.path.clone()));
    header.extend(["status", "exit_code", "error_kind"].map(String::from));
    header.extend(AGGREGATE_METRICS.map(String::from));
    let mut table = Table {
        file: "aggregate.csv".into(),
        header,
        rows: Vec::new(),
    };
    for cell in &outcomes {
        let art = &cell.artifact;
        let mut row = vec![cell.index.to_string()];
        row.extend(cell.values.iter().map(value_cell));
        row.push(json!(art.status).as_str().unwrap_or_default().to_string());
        row.push(art.exit_code().to_string());
        row.push(art.error.as_ref().map(|e| e.kind.clone()).unwrap_or_default());
        for key in AGGREGATE_METRICS {
            row.push(match art.results.get(key) {
                Some(Value::Number(n)) if n.is_f64() => fmt_f64(n.as_f64().unwrap()),
                Some(Value::Number(n)) => n.to_string(),
                _ => String::new(),
            });
        }
        table.rows.push(row);
    }

    let mut summary = Artifact::new("sweep", template);
    summary.hash_salt = format!(
        " {} {}",
        command.name(),
        axes.iter()
            .map(|a| format!("{}={}", a.path, a.values.iter().map(value_cell).collect::<Vec<_>>().join(",")))
            .collect::<Vec<_>>()
            .join(" ")
    );
    summary.set("run", command.name());
    summary.set(
        "axes",
        axes.iter()
            .map(|a| json!({ "path": a.path, "values": a.values.iter().map(value_cell).collect::<Vec<_>>() }))
            .collect::<Vec<_>>(),
    );
    summary.set("cells", outcomes.len());
    let failed = outcomes.iter().filter(|c| c.artifact.status != Status::Ok).count();
    summary.set("failed_cells", failed);
    if let Some(curve) = sigma_curve(template, axes, &outcomes) {
        summary.results.extend(curve);
    }
    if failed > 0 {
        summary.status = Status::Failed;
    }
    summary.tables = vec![table];
    std::fs::create_dir_all(sweep_dir).map_err(output_err(sweep_dir))?;
    Ok(summary)
}

fn value_cell(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(f) => fmt_f64(*f),
        other => other.to_string(),
    }
}

/// `σ ↦ T*(σ)` when the sweep varies only the control bound.
fn sigma_curve(
    template: &Scenario,
    axes: &[Axis],
    outcomes: &[CellOutcome],
) -> Option<serde_json::Map<String, Value>> {
    if axes.len() != 1 || axes[0].path != "time_optimal.sigma" {
        return None;
    }
    let mut points: Vec<(f64, f64)> = outcomes
        .iter()
        .filter_map(|c| {
            let sigma = c.values[0].as_float().or_else(|| c.values[0].as_integer().map(|i| i as f64))?;
            let t = c.artifact.results.get("t_star")?.as_f64()?;
            Some((sigma, t))
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tol = template.time_optimal.as_ref().map_or(0.0, |t| t.bisect_tol);
    let monotone = points.windows(2).all(|p| p[1].1 <= p[0].1 + tol);
    let mut m = serde_json::Map::new();
    m.insert("t_star_curve".into(), json!(points));
    m.insert("t_star_non_increasing".into(), json!(monotone));
    Some(m)
}
