//! Experiment runner for the penalty-program solvers: circle and control
//! sweeps, the dual rate study and derivative checks, written as CSV with a
//! JSON manifest.

use std::fs;
use std::path::PathBuf;

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use config::{ExperimentKind, ExperimentSpec};
use qpp_core::outer::OuterStatus;
use error::CliError;

/// What a run produced and whether every cell ended as expected.
#[derive(Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub ok: bool,
    /// Human-readable lines for the terminal.
    pub lines: Vec<String>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.ok {
            0
        } else {
            1
        }
    }
}

pub fn run(spec: &ExperimentSpec) -> Result<RunReport, CliError> {
    spec.validate()?;
    let dir = &spec.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))?;
    let (mut files, ok, lines) = match spec.kind {
        ExperimentKind::CircleSweep | ExperimentKind::OcpSweep | ExperimentKind::SingleSolve => {
            let outcome = match spec.kind {
                ExperimentKind::CircleSweep => experiments::circle_sweep(spec)?,
                ExperimentKind::OcpSweep => experiments::ocp_sweep(spec)?,
                _ => experiments::single_solve(spec)?,
            };
            let lines = outcome
                .cells
                .iter()
                .filter(|c| !c.as_expected())
                .map(|c| format!("unexpected status {} in {}", c.status.as_str(), c.label()))
                .collect();
            (output::write_sweep(dir, &outcome)?, outcome.all_as_expected(), lines)
        }
        ExperimentKind::RateStudy => {
            let study = experiments::rate_study(spec)?;
            let lines = vec![
                format!(
                    "ALM  omega={:e}: empirical {:.6} ||M||2 {:.6} reachable {:.6}",
                    study.alm.omega, study.alm.empirical_rate, study.alm.predicted_rate, study.alm.reachable_rate
                ),
                format!(
                    "MALM omega={:e}: empirical {:.6} ||M||2 {:.6} reachable {:.6}",
                    study.malm.omega, study.malm.empirical_rate, study.malm.predicted_rate, study.malm.reachable_rate
                ),
                format!(
                    "ratio empirical {:.6} predicted {:.6} frozen {:.6}",
                    study.empirical_ratio, study.ratio_predicted, study.frozen_ratio
                ),
            ];
            let ok = study.alm.status == OuterStatus::Converged && study.malm.status == OuterStatus::Converged;
            (output::write_rates(dir, &study)?, ok, lines)
        }
        ExperimentKind::CheckDerivs => {
            let rows = experiments::check_derivs(spec)?;
            let mut lines = vec![format!(
                "{:<28} {:>5} {:<16} {:>12} {}",
                "instance", "point", "function", "max_rel_err", "pass"
            )];
            lines.extend(rows.iter().map(|r| {
                format!(
                    "{:<28} {:>5} {:<16} {:>12.3e} {}",
                    r.instance, r.point, r.report.function, r.report.max_rel_error, r.report.pass
                )
            }));
            let ok = rows.iter().all(|r| r.report.pass);
            (output::write_derivs(dir, &rows)?, ok, lines)
        }
    };
    let manifest = output::write_manifest(dir, spec, &files)?;
    files.push(manifest);
    Ok(RunReport { files, ok, lines })
}
