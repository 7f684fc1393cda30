//! CSV and JSON artifacts. Reals use the shortest round-trip scientific
//! representation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentSpec, Instance};
use crate::error::CliError;
use crate::experiments::{CellMetrics, CellResult, DerivRow, RateStudy, SweepOutcome};

pub fn real(v: f64) -> String {
    format!("{v:e}")
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Table {
    fn create(path: PathBuf, header: &[&str]) -> Result<Self, CliError> {
        let mut writer = csv::Writer::from_path(&path).map_err(|source| CliError::Csv {
            path: path.clone(),
            source,
        })?;
        writer.write_record(header).map_err(|source| CliError::Csv {
            path: path.clone(),
            source,
        })?;
        Ok(Self { path, writer })
    }

    fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        self.writer.write_record(fields).map_err(|source| CliError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush().map_err(CliError::io(&self.path))?;
        Ok(self.path)
    }
}

pub const CIRCLE_COLUMNS: [&str; 9] = [
    "method",
    "epsilon",
    "omega",
    "status",
    "e_a",
    "e_b",
    "total_inner_iters",
    "outer_iters",
    "wall_time_ms",
];

pub const OCP_COLUMNS: [&str; 9] = [
    "method",
    "h",
    "omega",
    "status",
    "delta_j",
    "r",
    "total_inner_iters",
    "outer_iters",
    "wall_time_ms",
];

pub const RATE_COLUMNS: [&str; 5] = [
    "k",
    "lambda_step_norm_ALM",
    "lambda_step_norm_MALM",
    "predicted_rate_ALM",
    "predicted_rate_MALM",
];

fn table_row(cell: &CellResult) -> Vec<String> {
    let key = match cell.instance {
        Instance::Circle { epsilon } => real(epsilon),
        Instance::Ocp { intervals } => real(qpp_core::problems::ocp::HORIZON / intervals as f64),
    };
    let (a, b) = match cell.metrics {
        Some(CellMetrics::Circle { e_a, e_b }) => (real(e_a), real(e_b)),
        Some(CellMetrics::Ocp { delta_j, r }) => (real(delta_j), real(r)),
        None => (String::new(), String::new()),
    };
    vec![
        cell.method.as_str().to_string(),
        key,
        real(cell.omega),
        cell.status.as_str().to_string(),
        a,
        b,
        cell.total_inner_iters.to_string(),
        cell.outer_iters.to_string(),
        cell.wall_time_ms.to_string(),
    ]
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

/// Writes `table.csv` plus one trace (and trajectory, for the control
/// problem) per solved cell.
pub fn write_sweep(dir: &Path, outcome: &SweepOutcome) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(dir)?;
    let columns = match outcome.cells.first().map(|c| c.instance) {
        Some(Instance::Ocp { .. }) => OCP_COLUMNS,
        _ => CIRCLE_COLUMNS,
    };
    let mut table = Table::create(dir.join("table.csv"), &columns)?;
    let mut files = vec![];
    for cell in &outcome.cells {
        table.row(&table_row(cell))?;
        if cell.trace.is_empty() {
            continue;
        }
        let mut trace = Table::create(
            dir.join(format!("trace_{}.csv", cell.label())),
            &["k", "residual_inf", "rho", "inner_iters", "psi_value", "lambda_step_norm"],
        )?;
        for r in &cell.trace {
            trace.row(&[
                r.k.to_string(),
                real(r.residual_inf),
                real(r.rho),
                r.inner_iters.to_string(),
                real(r.psi_value),
                real(r.lambda_step_norm),
            ])?;
        }
        files.push(trace.finish()?);
        if !cell.trajectory.is_empty() {
            let mut traj = Table::create(dir.join(format!("traj_{}.csv", cell.label())), &["t", "y", "u"])?;
            for s in &cell.trajectory {
                traj.row(&[real(s.t), real(s.y), real(s.u)])?;
            }
            files.push(traj.finish()?);
        }
    }
    files.insert(0, table.finish()?);
    if let Some(reference) = &outcome.reference {
        files.push(write_json(&dir.join("reference.json"), reference)?);
    }
    Ok(files)
}

pub fn write_rates(dir: &Path, study: &RateStudy) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(dir)?;
    let mut table = Table::create(dir.join("rates.csv"), &RATE_COLUMNS)?;
    let (a, m) = (&study.alm.lambda_step_norms, &study.malm.lambda_step_norms);
    let cell = |v: &[f64], i: usize| v.get(i).map(|x| real(*x)).unwrap_or_default();
    for i in 0..a.len().max(m.len()) {
        table.row(&[
            (i + 1).to_string(),
            cell(a, i),
            cell(m, i),
            real(study.alm.predicted_rate),
            real(study.malm.predicted_rate),
        ])?;
    }
    Ok(vec![
        table.finish()?,
        write_json(&dir.join("rate_summary.json"), study)?,
    ])
}

pub fn write_derivs(dir: &Path, rows: &[DerivRow]) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(dir)?;
    let mut table = Table::create(
        dir.join("derivs.csv"),
        &["instance", "point", "function", "max_rel_error", "row", "col", "analytic", "numeric", "pass"],
    )?;
    for r in rows {
        let w = r.report.worst_entry.as_ref();
        table.row(&[
            r.instance.clone(),
            r.point.to_string(),
            r.report.function.clone(),
            real(r.report.max_rel_error),
            w.map(|e| e.row.to_string()).unwrap_or_default(),
            w.map(|e| e.col.to_string()).unwrap_or_default(),
            w.map(|e| real(e.analytic)).unwrap_or_default(),
            w.map(|e| real(e.numeric)).unwrap_or_default(),
            r.report.pass.to_string(),
        ])?;
    }
    Ok(vec![table.finish()?])
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    fs::write(path, text).map_err(CliError::io(path))?;
    Ok(path.to_path_buf())
}

#[derive(Serialize)]
struct ManifestFile {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: &'a ExperimentSpec,
    config_sha256: String,
    files: Vec<ManifestFile>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `manifest.json` with the resolved spec and a digest of every artifact.
pub fn write_manifest(dir: &Path, spec: &ExperimentSpec, files: &[PathBuf]) -> Result<PathBuf, CliError> {
    let config_text = serde_json::to_string(spec).expect("specs serialize");
    let mut entries = vec![];
    for f in files {
        let bytes = fs::read(f).map_err(CliError::io(f))?;
        entries.push(ManifestFile {
            name: f
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: sha256_hex(&bytes),
        });
    }
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            version: env!("CARGO_PKG_VERSION"),
            config: spec,
            config_sha256: sha256_hex(config_text.as_bytes()),
            files: entries,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for v in [0.0, 1e-8, 0.1, 4.4e-3, -7.532_290_1, f64::MIN_POSITIVE] {
            assert_eq!(real(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(real(1e-8), "1e-8");
    }
}
