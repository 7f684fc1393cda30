//! Reference objective for optimality gaps of the control problem.
//!
//! The continuous optimum is not available in closed form, so δJ is measured
//! against `f(x_∞)` of a fine-mesh solve with a tiny penalty weight. Results
//! are cached as JSON together with the full configuration that produced them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ConfigError, EvalError};
use crate::inner::InnerOptions;
use crate::nlp::{NlpProblem, PenaltyWeight};
use crate::outer::{malm, OuterOptions, OuterStatus};
use crate::problems::ocp::make_ocp;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("reference solve ended with status {0:?}")]
    NotConverged(OuterStatus),
    #[error("reference cache {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Everything that determines the reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStamp {
    pub intervals: usize,
    pub q: usize,
    pub omega: f64,
    pub outer: OuterOptions,
    pub inner: InnerOptions,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceObjective {
    pub stamp: ReferenceStamp,
    pub objective: f64,
    /// `‖c(x_∞)‖²` of the reference solve.
    pub r: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
}

impl ReferenceStamp {
    pub fn new(intervals: usize, q: usize, omega: f64, outer: &OuterOptions, inner: &InnerOptions) -> Self {
        Self {
            intervals,
            q,
            omega,
            outer: outer.clone(),
            inner: inner.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    fn file_name(&self) -> String {
        format!("jref_N{}_q{}_w{:e}.json", self.intervals, self.q, self.omega)
    }
}

/// Solves the control problem on the stamped mesh from `x₀ = 0, λ₀ = 0`.
pub fn reference_objective(stamp: &ReferenceStamp) -> Result<ReferenceObjective, ReferenceError> {
    let ocp = make_ocp(stamp.intervals, stamp.q)?;
    let omega = PenaltyWeight::new(stamp.omega)
        .ok_or_else(|| ConfigError::InvalidOption {
            name: "omega",
            reason: "must be finite and non-negative".into(),
        })?;
    let d = ocp.dims();
    let hist = malm(&ocp, omega, &vec![0.0; d.n], &vec![0.0; d.m], &stamp.outer, &stamp.inner)?;
    if hist.status != OuterStatus::Converged {
        return Err(ReferenceError::NotConverged(hist.status));
    }
    let x = hist.x_final().expect("converged history has records");
    Ok(ReferenceObjective {
        stamp: stamp.clone(),
        objective: ocp.eval_f(x)?,
        r: ocp.feasibility_residual(x)?,
        outer_iters: hist.outer_iters(),
        inner_iters: hist.total_inner_iters(),
    })
}

/// [`reference_objective`] backed by a cache in `dir`. A cached entry is
/// reused only if its stamp matches exactly.
pub fn cached_reference_objective(dir: &Path, stamp: &ReferenceStamp) -> Result<ReferenceObjective, ReferenceError> {
    let path = dir.join(stamp.file_name());
    let io = |source| ReferenceError::Io {
        path: path.clone(),
        source,
    };
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(entry) = serde_json::from_str::<ReferenceObjective>(&text) {
            if entry.stamp == *stamp {
                return Ok(entry);
            }
        }
    }
    let entry = reference_objective(stamp)?;
    fs::create_dir_all(dir).map_err(io)?;
    let text = serde_json::to_string_pretty(&entry).expect("reference entries serialize");
    fs::write(&path, text).map_err(io)?;
    Ok(entry)
}
