//! Outer loops: the modified augmented Lagrangian method, its ω = 0
//! specialization, and quadratic penalty solves.
//!
//! Every subproblem `min Ψ(x; λ, ρ, ω) s.t. g(x) ≥ 0` is handed to
//! [`crate::inner`]; equality constraints never reach the inner solver.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, EvalError};
use crate::inner::{minimize_from, InnerOptions, InnerResult, InnerStatus, WarmStart};
use crate::linalg::{norm2, norm_inf};
use crate::nlp::{self, first_order_multiplier, AugmentedLagrangian, NlpProblem, PenaltyWeight};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OuterOptions {
    /// Stopping tolerance on `‖c(x) + ωλ‖∞`.
    pub tol: f64,
    pub rho0: f64,
    /// Factor applied to ρ after every non-converged outer iteration.
    pub c_rho: f64,
    pub k_max: usize,
    pub rho_floor: f64,
    /// Start each subproblem from the previous iterate and multipliers.
    pub warm_start: bool,
    /// Hold ρ at this value instead of following the schedule.
    pub fixed_rho: Option<f64>,
    /// Wall-clock budget for one solve, in seconds.
    pub time_limit_s: Option<f64>,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            rho0: 0.1,
            c_rho: 0.1,
            k_max: 100,
            rho_floor: 1e-12,
            warm_start: true,
            fixed_rho: None,
            time_limit_s: None,
        }
    }
}

impl OuterOptions {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tol > 0.0) {
            return Err(ConfigError::option("tol", "must be positive"));
        }
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(ConfigError::option("rho0", "must be positive and finite"));
        }
        if !(self.c_rho > 0.0 && self.c_rho < 1.0) {
            return Err(ConfigError::option("c_rho", "must lie in (0, 1)"));
        }
        if !(self.rho_floor >= 0.0) {
            return Err(ConfigError::option("rho_floor", "must be non-negative"));
        }
        if let Some(r) = self.fixed_rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(ConfigError::option("fixed_rho", "must be positive and finite"));
            }
        }
        if let Some(t) = self.time_limit_s {
            if !(t > 0.0) {
                return Err(ConfigError::option("time_limit_s", "must be positive"));
            }
        }
        Ok(())
    }

    fn deadline(&self) -> Option<Instant> {
        self.time_limit_s
            .map(|s| Instant::now() + Duration::from_secs_f64(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterStatus {
    Converged,
    MaxOuterIterations,
    InnerFailure,
    TimeLimit,
}

impl OuterStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OuterStatus::Converged => "converged",
            OuterStatus::MaxOuterIterations => "max_outer_iterations",
            OuterStatus::InnerFailure => "inner_failure",
            OuterStatus::TimeLimit => "time_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    /// `‖c(x_k) + ωλ_k‖∞`
    pub residual: f64,
    /// Penalty parameter used for this subproblem.
    pub rho: f64,
    pub inner_iters: usize,
    pub inner_status: InnerStatus,
    pub inner_kkt: f64,
    pub psi_value: f64,
    /// `‖λ_k − λ_{k−1}‖₂`
    pub lambda_step_norm: f64,
}

/// One row of the streamed iterate trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub k: usize,
    pub residual_inf: f64,
    pub rho: f64,
    pub inner_iters: usize,
    pub psi_value: f64,
    pub lambda_step_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterHistory {
    pub omega: f64,
    pub records: Vec<OuterRecord>,
    pub status: OuterStatus,
    /// Diagnostic from the subproblem that ended the run, if any.
    pub inner_error: Option<EvalError>,
}

impl OuterHistory {
    pub fn last(&self) -> Option<&OuterRecord> {
        self.records.last()
    }

    pub fn x_final(&self) -> Option<&[f64]> {
        self.last().map(|r| r.x.as_slice())
    }

    pub fn outer_iters(&self) -> usize {
        self.records.len()
    }

    pub fn total_inner_iters(&self) -> usize {
        self.records.iter().map(|r| r.inner_iters).sum()
    }

    pub fn converged(&self) -> bool {
        self.status == OuterStatus::Converged
    }

    pub fn trace_rows(&self) -> Vec<TraceRow> {
        self.records
            .iter()
            .map(|r| TraceRow {
                k: r.k,
                residual_inf: r.residual,
                rho: r.rho,
                inner_iters: r.inner_iters,
                psi_value: r.psi_value,
                lambda_step_norm: r.lambda_step_norm,
            })
            .collect()
    }
}

fn check_dims(problem: &dyn NlpProblem, x0: &[f64], lambda0: Option<&[f64]>) -> Result<(), ConfigError> {
    let d = problem.dims();
    if x0.len() != d.n {
        return Err(ConfigError::Dimension {
            what: "x0",
            expected: d.n,
            got: x0.len(),
        });
    }
    if let Some(l) = lambda0 {
        if l.len() != d.m {
            return Err(ConfigError::Dimension {
                what: "lambda0",
                expected: d.m,
                got: l.len(),
            });
        }
    }
    Ok(())
}

/// Mutable loop state shared by all outer methods.
struct Driver<'a> {
    problem: &'a dyn NlpProblem,
    inner_opts: &'a InnerOptions,
    warm_start: bool,
    x: Vec<f64>,
    eta: Option<Vec<f64>>,
    mu_prev: f64,
    failures: usize,
    history: OuterHistory,
}

enum Step {
    Continue,
    Stop(OuterStatus),
}

impl<'a> Driver<'a> {
    fn new(problem: &'a dyn NlpProblem, omega: f64, x0: &[f64], inner_opts: &'a InnerOptions, warm_start: bool) -> Self {
        Self {
            problem,
            inner_opts,
            warm_start,
            x: x0.to_vec(),
            eta: None,
            mu_prev: inner_opts.mu0,
            failures: 0,
            history: OuterHistory {
                omega,
                records: Vec::new(),
                status: OuterStatus::MaxOuterIterations,
                inner_error: None,
            },
        }
    }

    fn solve(&mut self, omega: f64, rho: f64, lambda: &[f64]) -> InnerResult {
        let al = AugmentedLagrangian::new(self.problem, omega, rho, lambda);
        let warm = match (&self.eta, self.warm_start) {
            (Some(eta), true) => Some(WarmStart {
                eta: eta.clone(),
                mu0: self.mu_prev.max(1e-6),
            }),
            _ => None,
        };
        minimize_from(&al, &self.x, warm.as_ref(), self.inner_opts, &mut |_| {})
    }

    /// Runs subproblem `k`, applies the multiplier update, and records the
    /// iterate. Returns the new multiplier alongside the loop decision.
    fn iterate(
        &mut self,
        k: usize,
        omega: f64,
        rho: f64,
        lambda: &[f64],
        tol: f64,
    ) -> (Vec<f64>, Step) {
        let res = self.solve(omega, rho, lambda);
        if let InnerStatus::EvaluationError(e) = &res.status {
            self.history.inner_error = Some(e.clone());
            return (lambda.to_vec(), Step::Stop(OuterStatus::InnerFailure));
        }
        let cx = match nlp::c(self.problem, &res.x_star) {
            Ok(c) => c,
            Err(e) => {
                self.history.inner_error = Some(e);
                return (lambda.to_vec(), Step::Stop(OuterStatus::InnerFailure));
            }
        };
        let lambda_new = first_order_multiplier(&cx, lambda, omega, rho);
        let step: Vec<f64> = lambda_new.iter().zip(lambda).map(|(a, b)| a - b).collect();
        let shifted: Vec<f64> = cx
            .iter()
            .zip(&lambda_new)
            .map(|(c, l)| c + omega * l)
            .collect();
        let residual = norm_inf(&shifted);
        let converged_inner = res.status.is_success();

        self.x = res.x_star.clone();
        self.mu_prev = res.mu_final;
        self.eta = Some(res.eta.clone());
        self.history.records.push(OuterRecord {
            k,
            x: res.x_star,
            lambda: lambda_new.clone(),
            eta: res.eta,
            residual,
            rho,
            inner_iters: res.newton_iters,
            inner_status: res.status,
            inner_kkt: res.kkt_residual,
            psi_value: res.objective,
            lambda_step_norm: norm2(&step),
        });

        if converged_inner {
            self.failures = 0;
        } else {
            self.failures += 1;
            if self.failures >= 2 {
                return (lambda_new, Step::Stop(OuterStatus::InnerFailure));
            }
        }
        if converged_inner && residual <= tol {
            return (lambda_new, Step::Stop(OuterStatus::Converged));
        }
        (lambda_new, Step::Continue)
    }

    fn finish(mut self, status: OuterStatus) -> OuterHistory {
        self.history.status = status;
        self.history
    }
}

/// Modified augmented Lagrangian method for the penalty program with data ω.
pub fn malm(
    problem: &dyn NlpProblem,
    omega: PenaltyWeight,
    x0: &[f64],
    lambda0: &[f64],
    opts: &OuterOptions,
    inner_opts: &InnerOptions,
) -> Result<OuterHistory, ConfigError> {
    opts.validate()?;
    inner_opts.validate()?;
    check_dims(problem, x0, Some(lambda0))?;
    let omega = omega.value();
    let deadline = opts.deadline();
    let mut driver = Driver::new(problem, omega, x0, inner_opts, opts.warm_start);
    let mut lambda = lambda0.to_vec();
    let mut rho = opts.fixed_rho.unwrap_or(opts.rho0);
    for k in 1..=opts.k_max {
        let (next, step) = driver.iterate(k, omega, rho, &lambda, opts.tol);
        lambda = next;
        if let Step::Stop(status) = step {
            return Ok(driver.finish(status));
        }
        if opts.fixed_rho.is_none() {
            rho = (opts.c_rho * rho).max(opts.rho_floor);
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Ok(driver.finish(OuterStatus::TimeLimit));
        }
    }
    Ok(driver.finish(OuterStatus::MaxOuterIterations))
}

/// Classical method of multipliers: [`malm`] with ω = 0.
pub fn alm(
    problem: &dyn NlpProblem,
    x0: &[f64],
    lambda0: &[f64],
    opts: &OuterOptions,
    inner_opts: &InnerOptions,
) -> Result<OuterHistory, ConfigError> {
    malm(problem, PenaltyWeight::ZERO, x0, lambda0, opts, inner_opts)
}

/// One interior-point solve of `min Φ_ω s.t. g ≥ 0`.
pub fn qpm_direct(
    problem: &dyn NlpProblem,
    omega: PenaltyWeight,
    x0: &[f64],
    inner_opts: &InnerOptions,
) -> Result<OuterHistory, ConfigError> {
    if omega.is_zero() {
        return Err(ConfigError::option("omega", "penalty solves need ω > 0"));
    }
    inner_opts.validate()?;
    check_dims(problem, x0, None)?;
    let zeros = vec![0.0; problem.dims().m];
    let mut driver = Driver::new(problem, omega.value(), x0, inner_opts, false);
    // Φ_ω is Ψ with no multiplier shift and penalty weight ω.
    let (_, step) = driver.iterate(1, 0.0, omega.value(), &zeros, f64::INFINITY);
    let status = match step {
        Step::Stop(OuterStatus::Converged) => OuterStatus::Converged,
        _ => OuterStatus::InnerFailure,
    };
    let mut history = driver.finish(status);
    // Report the residual against the problem's own ω.
    if let Some(r) = history.records.last_mut() {
        r.residual = shifted_residual(problem, omega.value(), &r.x, &r.lambda)?;
    }
    Ok(history)
}

/// Penalty continuation `ρ_k = max(ω, c_ρ ρ_{k−1})`, each stage warm-started.
pub fn qpm_continuation(
    problem: &dyn NlpProblem,
    omega: PenaltyWeight,
    x0: &[f64],
    opts: &OuterOptions,
    inner_opts: &InnerOptions,
) -> Result<OuterHistory, ConfigError> {
    opts.validate()?;
    inner_opts.validate()?;
    check_dims(problem, x0, None)?;
    let target = if omega.is_zero() {
        if opts.rho_floor == 0.0 {
            return Err(ConfigError::option(
                "rho_floor",
                "continuation towards ω = 0 needs a positive floor",
            ));
        }
        opts.rho_floor
    } else {
        omega.value()
    };
    if opts.rho0 < target {
        return Err(ConfigError::option("rho0", "must not be below the target weight"));
    }
    let deadline = opts.deadline();
    let zeros = vec![0.0; problem.dims().m];
    let mut driver = Driver::new(problem, omega.value(), x0, inner_opts, opts.warm_start);
    let mut rho = opts.rho0;
    for k in 1..=opts.k_max {
        let (_, step) = driver.iterate(k, 0.0, rho, &zeros, f64::INFINITY);
        let rec = driver.history.records.last_mut();
        if let Some(r) = rec {
            r.residual = shifted_residual(problem, omega.value(), &r.x, &r.lambda)?;
        }
        match step {
            Step::Stop(OuterStatus::Converged) if rho <= target => {
                return Ok(driver.finish(OuterStatus::Converged));
            }
            Step::Stop(OuterStatus::Converged) | Step::Continue => {}
            Step::Stop(status) => return Ok(driver.finish(status)),
        }
        let next = opts.c_rho * rho;
        rho = if next <= target * (1.0 + 1e-12) { target } else { next };
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Ok(driver.finish(OuterStatus::TimeLimit));
        }
    }
    Ok(driver.finish(OuterStatus::MaxOuterIterations))
}

fn shifted_residual(problem: &dyn NlpProblem, omega: f64, x: &[f64], lambda: &[f64]) -> Result<f64, ConfigError> {
    let cx = nlp::c(problem, x).map_err(|e| ConfigError::option("x", e.to_string()))?;
    Ok(cx
        .iter()
        .zip(lambda)
        .fold(0f64, |m, (c, l)| m.max((c + omega * l).abs())))
}

/// Residuals of the first-order optimality conditions of the penalty program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// `‖∇f − ∇cᵀλ − ∇gᵀη‖∞`
    pub stationarity: f64,
    /// `‖c + ωλ‖∞`
    pub feasibility: f64,
    pub min_eta: f64,
    /// `maxᵢ |ηᵢ gᵢ(x)|`
    pub complementarity: f64,
    /// `max(0, −minᵢ gᵢ(x))`
    pub ineq_violation: f64,
}

pub fn kkt_residuals(
    problem: &dyn NlpProblem,
    omega: f64,
    x: &[f64],
    lambda: &[f64],
    eta: &[f64],
) -> Result<KktResiduals, EvalError> {
    let mut grad = nlp::grad_f(problem, x)?;
    let cx = nlp::c(problem, x)?;
    let gx = nlp::g(problem, x)?;
    for &(r, c, v) in &nlp::jac_c(problem, x)?.entries {
        grad[c] -= v * lambda[r];
    }
    for &(r, c, v) in &nlp::jac_g(problem, x)?.entries {
        grad[c] -= v * eta[r];
    }
    Ok(KktResiduals {
        stationarity: norm_inf(&grad),
        feasibility: cx
            .iter()
            .zip(lambda)
            .fold(0f64, |m, (c, l)| m.max((c + omega * l).abs())),
        min_eta: eta.iter().cloned().fold(f64::INFINITY, f64::min),
        complementarity: eta
            .iter()
            .zip(&gx)
            .fold(0f64, |m, (e, g)| m.max((e * g).abs())),
        ineq_violation: gx.iter().fold(0f64, |m, g| m.max(-g)),
    })
}
