//! Experiment drivers. Each returns in-memory results; [`crate::output`]
//! turns them into files.

use std::path::PathBuf;
use std::time::Instant;

use qpp_core::deriv_check::{check_inner_objective, check_problem, CheckReport};
use qpp_core::nlp::{lift, AugmentedLagrangian};
use qpp_core::outer::{
    alm, kkt_residuals, malm, qpm_continuation, qpm_direct, KktResiduals, OuterHistory, OuterStatus, TraceRow,
};
use qpp_core::problems::{
    cached_reference_objective, circle_metrics, make_circle, make_ocp, ocp_metrics, CircleParams, ReferenceObjective,
    ReferenceStamp, TrajectorySample, CIRCLE_X0,
};
use qpp_core::rate::{contraction_matrix, empirical_rate, FrozenModel, RateReport};
use qpp_core::{NlpProblem, PenaltyWeight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentKind, ExperimentSpec, Instance, Method};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "instance", rename_all = "kebab-case")]
pub enum CellMetrics {
    Circle { e_a: f64, e_b: f64 },
    Ocp { delta_j: f64, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellStatus {
    Solved(OuterStatus),
    /// The method is undefined for this ω.
    NotApplicable,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Solved(s) => s.as_str(),
            CellStatus::NotApplicable => "n.a.",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: Method,
    pub instance: Instance,
    pub omega: f64,
    pub status: CellStatus,
    pub metrics: Option<CellMetrics>,
    pub total_inner_iters: usize,
    pub outer_iters: usize,
    pub wall_time_ms: u128,
    pub expected_failure: bool,
    /// Residuals at the final iterate of a converged solve.
    pub kkt: Option<KktResiduals>,
    pub x_final: Option<Vec<f64>>,
    pub trace: Vec<TraceRow>,
    pub trajectory: Vec<TrajectorySample>,
}

impl CellResult {
    pub fn converged(&self) -> bool {
        self.status == CellStatus::Solved(OuterStatus::Converged)
    }

    /// Whether the cell ended in a status the experiment allows.
    pub fn as_expected(&self) -> bool {
        self.converged() || self.expected_failure || self.status == CellStatus::NotApplicable
    }

    /// File-name stem, e.g. `malm_eps1e-4_w1e-8` or `qpm-direct_N50_w1e-2`.
    pub fn label(&self) -> String {
        match self.instance {
            Instance::Circle { epsilon } => format!("{}_eps{:e}_w{:e}", self.method.as_str(), epsilon, self.omega),
            Instance::Ocp { intervals } => format!("{}_N{}_w{:e}", self.method.as_str(), intervals, self.omega),
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self.instance {
            Instance::Circle { epsilon } => Some(epsilon),
            Instance::Ocp { .. } => None,
        }
    }

    pub fn intervals(&self) -> Option<usize> {
        match self.instance {
            Instance::Ocp { intervals } => Some(intervals),
            Instance::Circle { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub kind: ExperimentKind,
    pub q: usize,
    pub cells: Vec<CellResult>,
    pub reference: Option<ReferenceObjective>,
}

impl SweepOutcome {
    pub fn all_as_expected(&self) -> bool {
        self.cells.iter().all(CellResult::as_expected)
    }

    pub fn find(&self, method: Method, instance: Instance, omega: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.instance == instance && c.omega == omega)
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    b.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn applicable(method: Method, omega: f64) -> bool {
    match method {
        Method::Malm => true,
        Method::Alm => omega == 0.0,
        Method::QpmDirect | Method::QpmContinuation => omega > 0.0,
    }
}

fn run_method(
    spec: &ExperimentSpec,
    problem: &dyn NlpProblem,
    method: Method,
    omega: f64,
    x0: &[f64],
) -> Result<OuterHistory, CliError> {
    let w = PenaltyWeight::new(omega).ok_or_else(|| CliError::Config(format!("invalid omega {omega}")))?;
    let lambda0 = vec![0.0; problem.dims().m];
    let outer = spec.cell_outer();
    let inner = &spec.inner;
    Ok(match method {
        Method::Malm => malm(problem, w, x0, &lambda0, &outer, inner)?,
        Method::Alm => alm(problem, x0, &lambda0, &outer, inner)?,
        Method::QpmDirect => qpm_direct(problem, w, x0, inner)?,
        Method::QpmContinuation => qpm_continuation(problem, w, x0, &outer, inner)?,
    })
}

fn run_cell(
    spec: &ExperimentSpec,
    method: Method,
    instance: Instance,
    omega: f64,
    j_ref: f64,
) -> Result<CellResult, CliError> {
    let expected_failure = spec.is_expected_failure(
        method,
        match instance {
            Instance::Circle { epsilon } => Some(epsilon),
            Instance::Ocp { .. } => None,
        },
        match instance {
            Instance::Ocp { intervals } => Some(intervals),
            Instance::Circle { .. } => None,
        },
        omega,
    );
    let mut cell = CellResult {
        method,
        instance,
        omega,
        status: CellStatus::NotApplicable,
        metrics: None,
        total_inner_iters: 0,
        outer_iters: 0,
        wall_time_ms: 0,
        expected_failure,
        kkt: None,
        x_final: None,
        trace: vec![],
        trajectory: vec![],
    };
    if !applicable(method, omega) {
        return Ok(cell);
    }
    let start = Instant::now();
    let (hist, metrics, kkt, trajectory) = match instance {
        Instance::Circle { epsilon } => {
            let p = make_circle(CircleParams { epsilon });
            let hist = run_method(spec, &p, method, omega, &CIRCLE_X0)?;
            let metrics = hist.x_final().map(|x| {
                let m = circle_metrics(x);
                CellMetrics::Circle { e_a: m.e_a, e_b: m.e_b }
            });
            let kkt = certificate(&p, &hist)?;
            (hist, metrics, kkt, vec![])
        }
        Instance::Ocp { intervals } => {
            let p = make_ocp(intervals, spec.q)?;
            let hist = run_method(spec, &p, method, omega, &vec![0.0; p.dims().n])?;
            let metrics = match hist.x_final() {
                Some(x) => {
                    let m = ocp_metrics(&p, x, j_ref)?;
                    Some(CellMetrics::Ocp {
                        delta_j: m.delta_j,
                        r: m.r,
                    })
                }
                None => None,
            };
            let kkt = certificate(&p, &hist)?;
            let trajectory = hist.x_final().map(|x| p.trajectory(x)).unwrap_or_default();
            (hist, metrics, kkt, trajectory)
        }
    };
    cell.wall_time_ms = start.elapsed().as_millis();
    cell.status = CellStatus::Solved(hist.status);
    cell.metrics = metrics;
    cell.total_inner_iters = hist.total_inner_iters();
    cell.outer_iters = hist.outer_iters();
    cell.kkt = kkt;
    cell.x_final = hist.x_final().map(<[f64]>::to_vec);
    cell.trace = hist.trace_rows();
    cell.trajectory = trajectory;
    Ok(cell)
}

fn certificate(problem: &dyn NlpProblem, hist: &OuterHistory) -> Result<Option<KktResiduals>, CliError> {
    match hist.last() {
        Some(r) if hist.converged() => Ok(Some(kkt_residuals(problem, hist.omega, &r.x, &r.lambda, &r.eta)?)),
        _ => Ok(None),
    }
}

fn run_cells(spec: &ExperimentSpec, grid: Vec<(Method, Instance, f64)>, j_ref: f64) -> Result<Vec<CellResult>, CliError> {
    pool(spec.threads)?.install(|| {
        grid.into_par_iter()
            .map(|(m, inst, w)| run_cell(spec, m, inst, w, j_ref))
            .collect()
    })
}

pub fn circle_sweep(spec: &ExperimentSpec) -> Result<SweepOutcome, CliError> {
    spec.validate()?;
    let mut grid = vec![];
    for &epsilon in &spec.epsilons {
        for &omega in &spec.omegas {
            for &m in &spec.methods {
                grid.push((m, Instance::Circle { epsilon }, omega));
            }
        }
    }
    Ok(SweepOutcome {
        kind: spec.kind,
        q: spec.q,
        cells: run_cells(spec, grid, 0.0)?,
        reference: None,
    })
}

/// Cache directory for reference objectives.
pub fn reference_cache_dir(spec: &ExperimentSpec) -> PathBuf {
    spec.reference
        .cache_dir
        .clone()
        .unwrap_or_else(|| spec.output_dir.join("cache"))
}

pub fn reference(spec: &ExperimentSpec) -> Result<ReferenceObjective, CliError> {
    let stamp = ReferenceStamp::new(
        spec.reference.intervals,
        spec.q,
        spec.reference.omega,
        &spec.outer,
        &spec.inner,
    );
    Ok(cached_reference_objective(&reference_cache_dir(spec), &stamp)?)
}

pub fn ocp_sweep(spec: &ExperimentSpec) -> Result<SweepOutcome, CliError> {
    spec.validate()?;
    let reference = reference(spec)?;
    let mut grid = vec![];
    for &intervals in &spec.intervals {
        for &omega in &spec.omegas {
            for &m in &spec.methods {
                grid.push((m, Instance::Ocp { intervals }, omega));
            }
        }
    }
    Ok(SweepOutcome {
        kind: spec.kind,
        q: spec.q,
        cells: run_cells(spec, grid, reference.objective)?,
        reference: Some(reference),
    })
}

pub fn single_solve(spec: &ExperimentSpec) -> Result<SweepOutcome, CliError> {
    spec.validate()?;
    let instance = spec.instance.expect("validated");
    let reference = match instance {
        Instance::Ocp { .. } => Some(reference(spec)?),
        Instance::Circle { .. } => None,
    };
    let j_ref = reference.as_ref().map_or(0.0, |r| r.objective);
    let grid = spec
        .omegas
        .iter()
        .flat_map(|&w| spec.methods.iter().map(move |&m| (m, instance, w)))
        .collect();
    Ok(SweepOutcome {
        kind: spec.kind,
        q: spec.q,
        cells: run_cells(spec, grid, j_ref)?,
        reference,
    })
}

/// One side (ALM or MALM) of the rate study.
#[derive(Debug, Clone, Serialize)]
pub struct RateSide {
    pub omega: f64,
    pub rho: f64,
    pub status: OuterStatus,
    /// `‖λ_k − λ_{k−1}‖₂` for every outer iteration.
    pub lambda_step_norms: Vec<f64>,
    pub empirical_rate: f64,
    /// `‖M̃‖₂`
    pub predicted_rate: f64,
    /// `M̃` restricted to the Krylov space of the initial multiplier error.
    pub reachable_rate: f64,
    pub active_set: Vec<usize>,
    pub strict_complementarity_ok: bool,
    pub kkt: Option<KktResiduals>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateStudy {
    pub epsilon: f64,
    pub alm: RateSide,
    pub malm: RateSide,
    pub empirical_ratio: f64,
    /// ρ/(ρ+ω)
    pub ratio_predicted: f64,
    /// Rate ratio with both contractions built from the MALM bracket.
    pub frozen_ratio: f64,
}

pub fn rate_study(spec: &ExperimentSpec) -> Result<RateStudy, CliError> {
    spec.validate()?;
    let epsilon = spec.epsilons[0];
    let rho = spec.outer.fixed_rho.expect("validated");
    let omega = spec.omegas.iter().copied().find(|w| *w > 0.0).expect("validated");
    let p = make_circle(CircleParams { epsilon });
    let side = |w: f64| -> Result<(RateSide, RateReport), CliError> {
        let hist = run_method(spec, &p, Method::Malm, w, &CIRCLE_X0)?;
        let last = hist
            .last()
            .ok_or_else(|| CliError::Config("rate study produced no iterations".into()))?;
        let report = contraction_matrix(&p, &last.x, &last.lambda, &last.eta, w, rho, spec.rate.act_tol)?;
        let reachable = report.reachable_rate(&last.lambda)?;
        let kkt = certificate(&p, &hist)?;
        let empirical = empirical_rate(&hist, spec.rate.tail)?;
        Ok((
            RateSide {
                omega: w,
                rho,
                status: hist.status,
                lambda_step_norms: hist.records.iter().map(|r| r.lambda_step_norm).collect(),
                empirical_rate: empirical,
                predicted_rate: report.predicted_rate,
                reachable_rate: reachable,
                active_set: report.active_set.clone(),
                strict_complementarity_ok: report.strict_complementarity_ok,
                kkt,
            },
            report,
        ))
    };
    let (alm_side, _) = side(0.0)?;
    let (malm_side, malm_report) = side(omega)?;
    let frozen = FrozenModel::new(&malm_report.model, omega + rho)?;
    let frozen_ratio = frozen.predicted_rate(omega, rho)? / frozen.predicted_rate(0.0, rho)?;
    Ok(RateStudy {
        epsilon,
        empirical_ratio: malm_side.empirical_rate / alm_side.empirical_rate,
        ratio_predicted: rho / (rho + omega),
        frozen_ratio,
        alm: alm_side,
        malm: malm_side,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivRow {
    pub instance: String,
    pub point: usize,
    pub report: CheckReport,
}

fn circle_point(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let x1 = rng.random_range(0.1..2.0);
    vec![x1, x1 + rng.random_range(0.1..1.0)]
}

fn box_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-0.9..0.9)).collect()
}

fn check_instance(
    spec: &ExperimentSpec,
    name: &str,
    problem: &dyn NlpProblem,
    points: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DerivRow>, CliError> {
    let thr = spec.derivs.threshold;
    let d = problem.dims();
    let mut rows = vec![];
    for (k, x) in points.iter().enumerate() {
        let lambda: Vec<f64> = (0..d.m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eta: Vec<f64> = (0..d.p).map(|_| rng.random_range(0.0..1.0)).collect();
        let rho = rng.random_range(0.1..1.0);
        let mut push = |reports: Vec<CheckReport>, tag: &str| {
            rows.extend(reports.into_iter().map(|report| DerivRow {
                instance: format!("{name}{tag}"),
                point: k,
                report,
            }))
        };
        push(check_problem(problem, x, &lambda, &eta, thr)?, "");
        for &omega in &spec.omegas {
            let psi = AugmentedLagrangian::new(problem, omega, rho, &lambda);
            push(check_inner_objective("psi", &psi, x, thr)?, &format!(" w={omega:e}"));
            if omega > 0.0 {
                let zeros = vec![0.0; d.m];
                let phi = AugmentedLagrangian::new(problem, 0.0, omega, &zeros);
                push(check_inner_objective("phi", &phi, x, thr)?, &format!(" w={omega:e}"));
                let lifted = lift(problem, PenaltyWeight::new(omega).expect("validated"));
                let xh = lifted.start(x, &lambda, rho)?;
                push(
                    check_problem(&lifted, &xh, &lambda, &eta, thr)?,
                    &format!(" lifted w={omega:e}"),
                );
            }
        }
    }
    Ok(rows)
}

/// Finite-difference checks of every evaluator at seeded random points.
pub fn check_derivs(spec: &ExperimentSpec) -> Result<Vec<DerivRow>, CliError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.derivs.seed);
    let mut rows = vec![];
    for &epsilon in &spec.epsilons {
        let p = make_circle(CircleParams { epsilon });
        let points: Vec<_> = (0..spec.derivs.points).map(|_| circle_point(&mut rng)).collect();
        rows.extend(check_instance(spec, &format!("circle eps={epsilon:e}"), &p, &points, &mut rng)?);
    }
    let mut qs = vec![2, spec.q];
    qs.dedup();
    for &intervals in &spec.intervals {
        for &q in &qs {
            let p = make_ocp(intervals, q)?;
            let n = p.dims().n;
            let points: Vec<_> = (0..spec.derivs.points).map(|_| box_point(&mut rng, n)).collect();
            rows.extend(check_instance(spec, &format!("ocp N={intervals} q={q}"), &p, &points, &mut rng)?);
        }
    }
    Ok(rows)
}
