//! Experiment specifications and their presets.
//!
//! A spec is resolved in layers: the preset for the experiment kind, then
//! the JSON config file (deep-merged), then command-line flags.

use std::path::PathBuf;

use qpp_core::inner::InnerOptions;
use qpp_core::outer::OuterOptions;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const OUTPUT_DIR_ENV: &str = "QPP_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CircleSweep,
    OcpSweep,
    RateStudy,
    SingleSolve,
    CheckDerivs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Malm,
    Alm,
    QpmDirect,
    QpmContinuation,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Malm => "malm",
            Method::Alm => "alm",
            Method::QpmDirect => "qpm-direct",
            Method::QpmContinuation => "qpm-continuation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::Malm, Method::Alm, Method::QpmDirect, Method::QpmContinuation]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "instance", rename_all = "kebab-case")]
pub enum Instance {
    Circle { epsilon: f64 },
    Ocp { intervals: usize },
}

/// A grid cell expected not to converge; `None` fields match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedFailure {
    pub method: Method,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub intervals: Option<usize>,
    #[serde(default)]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceSpec {
    pub intervals: usize,
    pub omega: f64,
    /// Cache directory; defaults to `<output_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            intervals: 2000,
            omega: 1e-6,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateSpec {
    pub tail: usize,
    pub act_tol: f64,
}

impl Default for RateSpec {
    fn default() -> Self {
        Self {
            tail: 5,
            act_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DerivSpec {
    pub points: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for DerivSpec {
    fn default() -> Self {
        Self {
            points: 20,
            seed: 7,
            threshold: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub epsilons: Vec<f64>,
    pub omegas: Vec<f64>,
    pub intervals: Vec<usize>,
    /// Quadrature points per interval for the control problem.
    pub q: usize,
    pub methods: Vec<Method>,
    pub outer: OuterOptions,
    pub inner: InnerOptions,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses all logical cores.
    pub threads: Option<usize>,
    pub cell_timeout_s: f64,
    pub expected_failures: Vec<ExpectedFailure>,
    pub reference: ReferenceSpec,
    pub rate: RateSpec,
    pub derivs: DerivSpec,
    /// Instance for single solves.
    pub instance: Option<Instance>,
}

/// Inner settings for the sweeps; 3000 Newton steps leaves room for the
/// long valley traverses of the inconsistent circle cells.
fn sweep_inner() -> InnerOptions {
    InnerOptions {
        max_newton: 3000,
        ..InnerOptions::default()
    }
}

impl ExperimentSpec {
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = ExperimentSpec {
            kind,
            epsilons: vec![],
            omegas: vec![],
            intervals: vec![],
            q: 3,
            methods: vec![Method::Malm, Method::QpmDirect],
            outer: OuterOptions::default(),
            inner: sweep_inner(),
            output_dir: PathBuf::from("results"),
            threads: None,
            cell_timeout_s: 300.0,
            expected_failures: vec![],
            reference: ReferenceSpec::default(),
            rate: RateSpec::default(),
            derivs: DerivSpec::default(),
            instance: None,
        };
        match kind {
            ExperimentKind::CircleSweep => {
                let nc = |method, epsilon: f64, omega: f64| ExpectedFailure {
                    method,
                    epsilon: Some(epsilon),
                    intervals: None,
                    omega: Some(omega),
                };
                ExperimentSpec {
                    epsilons: vec![1e-1, 1e-2, 1e-4, 1e-6, 0.0],
                    omegas: vec![1e-1, 1e-2, 1e-4, 1e-6, 1e-8, 0.0],
                    outer: OuterOptions {
                        k_max: 1000,
                        ..OuterOptions::default()
                    },
                    expected_failures: vec![
                        nc(Method::Malm, 1e-4, 1e-8),
                        nc(Method::Malm, 1e-4, 0.0),
                        nc(Method::QpmDirect, 1e-1, 1e-8),
                        nc(Method::QpmDirect, 1e-2, 1e-8),
                        nc(Method::QpmDirect, 1e-4, 1e-8),
                    ],
                    ..base
                }
            }
            ExperimentKind::OcpSweep => ExperimentSpec {
                omegas: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 0.0],
                intervals: vec![50, 250, 500, 1000, 2000],
                outer: OuterOptions {
                    k_max: 500,
                    ..OuterOptions::default()
                },
                expected_failures: vec![ExpectedFailure {
                    method: Method::Malm,
                    epsilon: None,
                    intervals: None,
                    omega: Some(0.0),
                }],
                ..base
            },
            ExperimentKind::RateStudy => ExperimentSpec {
                epsilons: vec![0.0],
                omegas: vec![0.0, 0.1],
                methods: vec![Method::Malm],
                outer: OuterOptions {
                    tol: 1e-14,
                    k_max: 60,
                    fixed_rho: Some(1.0),
                    ..OuterOptions::default()
                },
                inner: InnerOptions {
                    kkt_tol: 1e-13,
                    ..sweep_inner()
                },
                ..base
            },
            ExperimentKind::SingleSolve => ExperimentSpec {
                omegas: vec![1e-2],
                methods: vec![Method::Malm],
                instance: Some(Instance::Circle { epsilon: 0.0 }),
                ..base
            },
            ExperimentKind::CheckDerivs => ExperimentSpec {
                epsilons: vec![1e-1, 1e-2, 0.0],
                omegas: vec![0.0, 1e-2],
                intervals: vec![5, 50],
                ..base
            },
        }
    }

    /// Deep-merges `overrides` into the preset for `kind`.
    pub fn with_overrides(kind: ExperimentKind, overrides: &Value) -> Result<Self, CliError> {
        let mut base = serde_json::to_value(Self::preset(kind)).expect("presets serialize");
        if let Some(obj) = overrides.as_object() {
            if let Some(k) = obj.get("kind") {
                let given: ExperimentKind = serde_json::from_value(k.clone())
                    .map_err(|e| CliError::Config(format!("kind: {e}")))?;
                if given != kind {
                    return Err(CliError::Config(format!(
                        "config is for {given:?} but the subcommand runs {kind:?}"
                    )));
                }
            }
        } else {
            return Err(CliError::Config("config must be a JSON object".into()));
        }
        merge(&mut base, overrides);
        serde_json::from_value(base).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.methods.is_empty() {
            return bad("method list is empty");
        }
        if self.omegas.is_empty() {
            return bad("omega grid is empty");
        }
        if self.omegas.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("omega values must be finite and non-negative");
        }
        if self.epsilons.iter().any(|e| !e.is_finite()) {
            return bad("epsilon values must be finite");
        }
        match self.kind {
            ExperimentKind::CircleSweep if self.epsilons.is_empty() => return bad("epsilon grid is empty"),
            ExperimentKind::OcpSweep if self.intervals.is_empty() => return bad("interval grid is empty"),
            ExperimentKind::SingleSolve if self.instance.is_none() => return bad("single solve needs an instance"),
            ExperimentKind::RateStudy => {
                let zeros = self.omegas.iter().filter(|w| **w == 0.0).count();
                if self.omegas.len() != 2 || zeros != 1 {
                    return bad("rate study needs one zero and one positive omega");
                }
                if self.epsilons.len() != 1 {
                    return bad("rate study needs exactly one epsilon");
                }
                if self.outer.fixed_rho.is_none() {
                    return bad("rate study needs outer.fixed_rho");
                }
                if self.rate.tail == 0 {
                    return bad("rate tail must be positive");
                }
            }
            _ => {}
        }
        if self.intervals.contains(&0) || self.q == 0 {
            return bad("interval counts and q must be positive");
        }
        if self.threads == Some(0) {
            return bad("threads must be positive");
        }
        if !(self.cell_timeout_s > 0.0) {
            return bad("cell_timeout_s must be positive");
        }
        self.outer.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.inner.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn is_expected_failure(&self, method: Method, epsilon: Option<f64>, intervals: Option<usize>, omega: f64) -> bool {
        self.expected_failures.iter().any(|f| {
            f.method == method
                && f.omega.map_or(true, |w| w == omega)
                && f.epsilon.map_or(true, |e| Some(e) == epsilon)
                && f.intervals.map_or(true, |n| Some(n) == intervals)
        })
    }

    /// Outer options for one cell, with the per-cell wall-clock budget.
    pub fn cell_outer(&self) -> OuterOptions {
        OuterOptions {
            time_limit_s: Some(self.cell_timeout_s),
            ..self.outer.clone()
        }
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn presets_are_valid() {
        for kind in [
            ExperimentKind::CircleSweep,
            ExperimentKind::OcpSweep,
            ExperimentKind::RateStudy,
            ExperimentKind::SingleSolve,
            ExperimentKind::CheckDerivs,
        ] {
            ExperimentSpec::preset(kind).validate().unwrap();
        }
    }

    #[test]
    fn overrides_merge_nested_options() {
        let spec = ExperimentSpec::with_overrides(
            ExperimentKind::CircleSweep,
            &json!({"omegas": [0.1], "inner": {"kkt_tol": 1e-9}}),
        )
        .unwrap();
        assert_eq!(spec.omegas, vec![0.1]);
        assert_eq!(spec.inner.kkt_tol, 1e-9);
        assert_eq!(spec.inner.max_newton, 3000);
        assert_eq!(spec.outer.k_max, 1000);
    }

    #[test]
    fn mismatched_kind_is_rejected() {
        let err = ExperimentSpec::with_overrides(ExperimentKind::OcpSweep, &json!({"kind": "rate-study"}));
        assert!(matches!(err, Err(CliError::Config(_))));
    }

    #[test]
    fn empty_method_list_is_invalid() {
        let mut spec = ExperimentSpec::preset(ExperimentKind::CircleSweep);
        spec.methods.clear();
        assert!(spec.validate().is_err());
    }
}
