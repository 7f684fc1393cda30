//! Primal-dual interior-point solver for `min φ(x) s.t. g(x) ≥ 0`.
//!
//! The inequalities are written as `g(x) − s = 0, s ≥ 0` with slacks kept
//! strictly positive by a fraction-to-boundary rule, so infeasible starting
//! points are accepted. Each Newton step solves the condensed primal system
//!
//! ```text
//! (∇²ₓₓ(φ − ηᵀg) + ∇gᵀ S⁻¹Λ ∇g + δI) Δx = −r_d − ∇gᵀ S⁻¹ (r_c + Λ r_p)
//! ```
//!
//! with a banded Cholesky factorization in the problem's preferred variable
//! order. Steps are globalized by backtracking on the ℓ₁ barrier merit
//! `φ − μ Σ ln s + ν ‖g(x) − s‖₁`.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, EvalError};
use crate::linalg::{bandwidth, dot, inverse_permutation, norm_inf, SymBand, Triplets};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Magnitude of any multiplier estimate hidden inside the objective
    /// (λ̃ for augmented Lagrangians). Scales the stationarity test together
    /// with the inequality multipliers.
    pub multiplier_scale: f64,
}

/// A smooth objective together with the inequalities it is minimized under.
pub trait InnerProblem {
    fn dim(&self) -> usize;
    fn num_ineq(&self) -> usize;
    fn objective(&self, x: &[f64]) -> Result<ObjectiveEval, EvalError>;

    fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.objective(x).map(|e| e.value)
    }

    /// Lower triangle of `∇²φ(x) − Σ ηⱼ ∇²gⱼ(x)`.
    fn hessian(&self, x: &[f64], eta: &[f64]) -> Result<Triplets, EvalError>;
    fn ineq(&self, x: &[f64]) -> Result<Vec<f64>, EvalError>;
    fn ineq_jacobian(&self, x: &[f64]) -> Result<Triplets, EvalError>;

    /// Elimination order for the Newton system, `perm[new] = old`.
    fn ordering(&self) -> Option<Vec<usize>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerOptions {
    /// Final tolerance on the perturbed KKT residual.
    pub kkt_tol: f64,
    /// Initial barrier parameter for cold starts.
    pub mu0: f64,
    /// Linear barrier reduction factor.
    pub mu_shrink: f64,
    /// Fraction-to-boundary coefficient.
    pub ftb: f64,
    pub max_newton: usize,
    /// First regularization tried when the Newton matrix is not positive definite.
    pub reg0: f64,
    pub reg_grow: f64,
    /// Looser residual accepted once progress stalls at the floating-point
    /// floor, which for tiny penalty weights lies above `kkt_tol`.
    pub acceptable_tol: f64,
    pub acceptable_iters: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-10,
            mu0: 1e-1,
            mu_shrink: 0.2,
            ftb: 0.995,
            max_newton: 200,
            reg0: 1e-8,
            reg_grow: 10.0,
            acceptable_tol: 1e-6,
            acceptable_iters: 15,
        }
    }
}

impl InnerOptions {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.kkt_tol > 0.0) {
            return Err(ConfigError::option("kkt_tol", "must be positive"));
        }
        if !(self.mu_shrink > 0.0 && self.mu_shrink < 1.0) {
            return Err(ConfigError::option("mu_shrink", "must lie in (0, 1)"));
        }
        if !(self.ftb > 0.0 && self.ftb < 1.0) {
            return Err(ConfigError::option("ftb", "must lie in (0, 1)"));
        }
        if !(self.mu0 > 0.0) {
            return Err(ConfigError::option("mu0", "must be positive"));
        }
        if !(self.reg0 > 0.0 && self.reg_grow > 1.0) {
            return Err(ConfigError::option("reg0/reg_grow", "need reg0 > 0 and reg_grow > 1"));
        }
        if !(self.acceptable_tol >= self.kkt_tol) || self.acceptable_iters == 0 {
            return Err(ConfigError::option(
                "acceptable_tol/acceptable_iters",
                "need acceptable_tol >= kkt_tol and at least one iteration",
            ));
        }
        Ok(())
    }

    /// Barrier floor; a solve only converges once μ has reached it.
    pub fn mu_min(&self) -> f64 {
        self.kkt_tol / 10.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InnerStatus {
    Converged,
    /// The unperturbed residual stayed below `acceptable_tol` for
    /// `acceptable_iters` consecutive iterations without reaching `kkt_tol`.
    Acceptable,
    IterationLimit,
    LineSearchFailure,
    EvaluationError(EvalError),
}

impl InnerStatus {
    /// Whether the result may be used as a subproblem solution.
    pub fn is_success(&self) -> bool {
        matches!(self, InnerStatus::Converged | InnerStatus::Acceptable)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub x_star: Vec<f64>,
    pub eta: Vec<f64>,
    pub slack: Vec<f64>,
    pub objective: f64,
    pub newton_iters: usize,
    pub kkt_residual: f64,
    pub mu_final: f64,
    pub status: InnerStatus,
}

/// Multipliers and barrier level carried over from a previous solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub eta: Vec<f64>,
    pub mu0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerTrace {
    pub iter: usize,
    pub mu: f64,
    pub kkt_residual: f64,
    pub alpha_primal: f64,
    pub alpha_dual: f64,
    pub regularization: f64,
    pub min_slack: f64,
    pub min_eta: f64,
}

pub fn minimize(problem: &dyn InnerProblem, x0: &[f64], opts: &InnerOptions) -> InnerResult {
    minimize_from(problem, x0, None, opts, &mut |_| {})
}

const KAPPA_EPS: f64 = 10.0;
const MU_SUPERLINEAR: f64 = 1.5;
const ARMIJO: f64 = 1e-4;
const KAPPA_SIGMA: f64 = 1e10;
const MIN_STEP: f64 = 1e-16;
const MAX_REG: f64 = 1e30;

struct Point {
    x: Vec<f64>,
    s: Vec<f64>,
    eta: Vec<f64>,
    obj: ObjectiveEval,
    g: Vec<f64>,
    jg: Triplets,
}

struct Residuals {
    rd: Vec<f64>,
    rp: Vec<f64>,
}

impl Point {
    fn residuals(&self) -> Residuals {
        let mut rd = self.obj.gradient.clone();
        for &(r, c, v) in &self.jg.entries {
            rd[c] -= v * self.eta[r];
        }
        let rp = self.g.iter().zip(&self.s).map(|(g, s)| g - s).collect();
        Residuals { rd, rp }
    }

    fn dual_scale(&self) -> f64 {
        1f64.max(self.obj.multiplier_scale).max(norm_inf(&self.eta))
    }

    fn kkt_error(&self, res: &Residuals, mu: f64) -> f64 {
        let comp = self
            .s
            .iter()
            .zip(&self.eta)
            .fold(0f64, |m, (s, e)| m.max((s * e - mu).abs()));
        (norm_inf(&res.rd) / self.dual_scale())
            .max(norm_inf(&res.rp))
            .max(comp)
    }
}

fn fraction_to_boundary(v: &[f64], dv: &[f64], tau: f64) -> f64 {
    v.iter().zip(dv).fold(1f64, |a, (&v, &d)| {
        if d < 0.0 {
            a.min(-tau * v / d)
        } else {
            a
        }
    })
}

fn barrier_merit(value: f64, s: &[f64], g: &[f64], mu: f64, nu: f64) -> f64 {
    let log_sum: f64 = s.iter().map(|v| v.ln()).sum();
    let infeas: f64 = g.iter().zip(s).map(|(g, s)| (g - s).abs()).sum();
    value - mu * log_sum + nu * infeas
}

/// Condensed Newton matrix in banded storage under the elimination order.
struct NewtonAssembly {
    inv: Vec<usize>,
    perm: Vec<usize>,
}

impl NewtonAssembly {
    fn new(n: usize, ordering: Option<Vec<usize>>) -> Self {
        let perm = ordering.unwrap_or_else(|| (0..n).collect());
        assert_eq!(perm.len(), n, "ordering must be a permutation of 0..n");
        let inv = inverse_permutation(&perm);
        Self { inv, perm }
    }

    fn assemble(&self, hess: &Triplets, jg_rows: &[Vec<(usize, f64)>], weights: &[f64], delta: f64) -> SymBand {
        let n = self.perm.len();
        let cond_pairs = jg_rows.iter().flat_map(|row| {
            row.iter()
                .flat_map(move |&(a, _)| row.iter().map(move |&(b, _)| (a, b)))
        });
        let bw = bandwidth(
            hess.entries.iter().map(|e| (e.0, e.1)).chain(cond_pairs),
            &self.inv,
        );
        let mut band = SymBand::zeros(n, bw);
        let mut put = |r: usize, c: usize, v: f64| {
            let (i, j) = (self.inv[r], self.inv[c]);
            if i >= j {
                band.add(i, j, v);
            } else {
                band.add(j, i, v);
            }
        };
        for &(r, c, v) in &hess.entries {
            put(r, c, v);
        }
        for (row, &w) in jg_rows.iter().zip(weights) {
            for &(a, va) in row {
                for &(b, vb) in row {
                    if self.inv[a] >= self.inv[b] {
                        put(a, b, w * va * vb);
                    }
                }
            }
        }
        if delta > 0.0 {
            band.add_diagonal(delta);
        }
        band
    }

    fn permute(&self, v: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&old| v[old]).collect()
    }

    fn unpermute(&self, v: &[f64]) -> Vec<f64> {
        self.inv.iter().map(|&new| v[new]).collect()
    }
}

/// Runs the interior-point method from `x0`, optionally warm-started with
/// multipliers and a barrier level, streaming one trace record per
/// iteration into `sink`.
pub fn minimize_from(
    problem: &dyn InnerProblem,
    x0: &[f64],
    warm: Option<&WarmStart>,
    opts: &InnerOptions,
    sink: &mut dyn FnMut(&InnerTrace),
) -> InnerResult {
    let n = problem.dim();
    let p = problem.num_ineq();
    assert_eq!(x0.len(), n, "x0 has wrong length");
    let mu_min = opts.mu_min();

    let fail = |x: &[f64], p: usize, iters: usize, err: EvalError| InnerResult {
        x_star: x.to_vec(),
        eta: vec![0.0; p],
        slack: vec![0.0; p],
        objective: f64::NAN,
        newton_iters: iters,
        kkt_residual: f64::INFINITY,
        mu_final: f64::NAN,
        status: InnerStatus::EvaluationError(err),
    };

    let evaluate = |x: Vec<f64>, s: Vec<f64>, eta: Vec<f64>| -> Result<Point, EvalError> {
        Ok(Point {
            obj: problem.objective(&x)?,
            g: problem.ineq(&x)?,
            jg: problem.ineq_jacobian(&x)?,
            x,
            s,
            eta,
        })
    };

    let g0 = match problem.ineq(x0) {
        Ok(g) => g,
        Err(e) => return fail(x0, p, 0, e),
    };
    let (mut mu, s0, eta0) = match warm {
        None => {
            let mu = opts.mu0.max(mu_min);
            let s: Vec<f64> = g0.iter().map(|&g| g.max(1.0)).collect();
            let eta = s.iter().map(|&s| mu / s).collect();
            (mu, s, eta)
        }
        Some(w) => {
            assert_eq!(w.eta.len(), p, "warm-start multipliers have wrong length");
            let mu = w.mu0.max(mu_min);
            let s: Vec<f64> = g0.iter().map(|&g| g.max(mu)).collect();
            let eta = s
                .iter()
                .zip(&w.eta)
                .map(|(&s, &e)| e.max(mu / s))
                .collect();
            (mu, s, eta)
        }
    };
    let mut pt = match evaluate(x0.to_vec(), s0, eta0) {
        Ok(pt) => pt,
        Err(e) => return fail(x0, p, 0, e),
    };

    let assembly = NewtonAssembly::new(n, problem.ordering());
    let mut nu = 1.0f64;
    let mut iters = 0usize;
    let mut last = (1.0, 1.0, 0.0);
    let mut acceptable_run = 0usize;

    loop {
        let res = pt.residuals();
        let mut err = pt.kkt_error(&res, mu);
        while mu > mu_min && err <= KAPPA_EPS * mu {
            mu = mu_min.max((opts.mu_shrink * mu).min(mu.powf(MU_SUPERLINEAR)));
            err = pt.kkt_error(&res, mu);
        }
        sink(&InnerTrace {
            iter: iters,
            mu,
            kkt_residual: err,
            alpha_primal: last.0,
            alpha_dual: last.1,
            regularization: last.2,
            min_slack: pt.s.iter().cloned().fold(f64::INFINITY, f64::min),
            min_eta: pt.eta.iter().cloned().fold(f64::INFINITY, f64::min),
        });

        let done = |pt: Point, status: InnerStatus, iters: usize, err: f64, mu: f64| InnerResult {
            objective: pt.obj.value,
            x_star: pt.x,
            eta: pt.eta,
            slack: pt.s,
            newton_iters: iters,
            kkt_residual: err,
            mu_final: mu,
            status,
        };
        if mu <= mu_min && err <= opts.kkt_tol {
            return done(pt, InnerStatus::Converged, iters, err, mu);
        }
        if pt.kkt_error(&res, 0.0) <= opts.acceptable_tol {
            acceptable_run += 1;
            if acceptable_run >= opts.acceptable_iters {
                return done(pt, InnerStatus::Acceptable, iters, err, mu);
            }
        } else {
            acceptable_run = 0;
        }
        if iters >= opts.max_newton {
            return done(pt, InnerStatus::IterationLimit, iters, err, mu);
        }
        iters += 1;

        let hess = match problem.hessian(&pt.x, &pt.eta) {
            Ok(h) => h,
            Err(e) => return fail(&pt.x, p, iters, e),
        };
        let jg_rows = pt.jg.row_lists();
        let weights: Vec<f64> = pt.eta.iter().zip(&pt.s).map(|(e, s)| e / s).collect();
        let rc: Vec<f64> = pt.s.iter().zip(&pt.eta).map(|(s, e)| s * e - mu).collect();
        let mut rhs = res.rd.iter().map(|v| -v).collect::<Vec<_>>();
        let corr: Vec<f64> = (0..p)
            .map(|j| (rc[j] + pt.eta[j] * res.rp[j]) / pt.s[j])
            .collect();
        for &(r, c, v) in &pt.jg.entries {
            rhs[c] -= v * corr[r];
        }
        let rhs_perm = assembly.permute(&rhs);

        let nu0 = nu;
        let merit0 = barrier_merit(pt.obj.value, &pt.s, &pt.g, mu, nu);
        let infeas0: f64 = res.rp.iter().map(|v| v.abs()).sum();
        let mut delta = 0.0f64;
        let accepted = loop {
            let band = assembly.assemble(&hess, &jg_rows, &weights, delta);
            let chol = match band.cholesky() {
                Ok(c) => c,
                Err(_) => {
                    delta = if delta == 0.0 { opts.reg0 } else { delta * opts.reg_grow };
                    if delta > MAX_REG {
                        break None;
                    }
                    continue;
                }
            };
            let mut dx = rhs_perm.clone();
            chol.solve_in_place(&mut dx);
            let dx = assembly.unpermute(&dx);
            let mut ds = pt.jg.mul_vec(&dx);
            for (d, r) in ds.iter_mut().zip(&res.rp) {
                *d += r;
            }
            let deta: Vec<f64> = (0..p)
                .map(|j| -(rc[j] + pt.eta[j] * ds[j]) / pt.s[j])
                .collect();

            let mult_bound = pt
                .eta
                .iter()
                .zip(&deta)
                .fold(0f64, |m, (e, d)| m.max((e + d).abs()));
            nu = (2.0 * mult_bound).max(1.0);
            let merit_start = if nu == nu0 {
                merit0
            } else {
                barrier_merit(pt.obj.value, &pt.s, &pt.g, mu, nu)
            };
            let slope = dot(&pt.obj.gradient, &dx)
                - mu * ds.iter().zip(&pt.s).map(|(d, s)| d / s).sum::<f64>()
                - nu * infeas0;
            let noise = 10.0 * f64::EPSILON * merit_start.abs().max(1.0);
            if slope > noise {
                delta = if delta == 0.0 { opts.reg0 } else { delta * opts.reg_grow };
                if delta > MAX_REG {
                    break None;
                }
                continue;
            }

            let tau = opts.ftb.max(1.0 - mu);
            let ap_max = fraction_to_boundary(&pt.s, &ds, tau);
            let ad_max = fraction_to_boundary(&pt.eta, &deta, tau);
            let mut t = 1.0;
            let mut found = None;
            while t * ap_max >= MIN_STEP {
                let a = t * ap_max;
                let xt: Vec<f64> = pt.x.iter().zip(&dx).map(|(x, d)| x + a * d).collect();
                let st: Vec<f64> = pt.s.iter().zip(&ds).map(|(s, d)| s + a * d).collect();
                let (vt, gt) = match problem.value(&xt).and_then(|v| Ok((v, problem.ineq(&xt)?))) {
                    Ok(r) => r,
                    Err(e) => return fail(&pt.x, p, iters, e),
                };
                let merit_t = barrier_merit(vt, &st, &gt, mu, nu);
                if merit_t <= merit_start + ARMIJO * a * slope.min(0.0) + noise {
                    found = Some((xt, st, a));
                    break;
                }
                t *= 0.5;
            }
            match found {
                Some((xt, st, a)) => break Some((xt, st, a, ad_max, deta, delta)),
                None => {
                    delta = if delta == 0.0 { opts.reg0 } else { delta * opts.reg_grow };
                    if delta > MAX_REG {
                        break None;
                    }
                }
            }
        };

        let Some((xt, st, ap, ad, deta, delta_used)) = accepted else {
            let res = pt.residuals();
            let err = pt.kkt_error(&res, mu);
            return done(pt, InnerStatus::LineSearchFailure, iters, err, mu);
        };
        let eta_new: Vec<f64> = pt
            .eta
            .iter()
            .zip(&deta)
            .zip(&st)
            .map(|((e, d), s)| {
                let v = e + ad * d;
                v.clamp(mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * mu / s)
            })
            .collect();
        last = (ap, ad, delta_used);
        pt = match evaluate(xt, st, eta_new) {
            Ok(pt) => pt,
            Err(e) => return fail(&pt.x, p, iters, e),
        };
    }
}
