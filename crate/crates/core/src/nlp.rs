//! Problem representation for quadratic penalty programs
//!
//! ```text
//! min_x  f(x) + 1/(2ω) ‖c(x)‖²   s.t.  g(x) ≥ 0
//! ```
//!
//! together with the penalty objective Φ_ω, the augmented Lagrangian Ψ used
//! by the multiplier methods, and the lifting `(x, ξ)` that turns a penalty
//! program into an equality-constrained one.

use crate::error::{ensure_finite, ensure_len, EvalError};
use crate::inner::{InnerProblem, ObjectiveEval};
use crate::linalg::{norm_inf, Triplets};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Decision variables.
    pub n: usize,
    /// Penalized (equality) constraint components.
    pub m: usize,
    /// Inequality components.
    pub p: usize,
}

/// Explicit affine inequality data, `g(x) = A x − b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineIneq {
    pub a: Triplets,
    pub b: Vec<f64>,
}

/// Smooth problem data `f`, `c`, `g` with first derivatives and, optionally,
/// the Hessian of the Lagrangian `∇²f − Σ λᵢ∇²cᵢ − Σ ηⱼ∇²gⱼ`.
///
/// Implementations must be pure functions of their arguments; solvers call
/// them from several threads at once when sweeping.
pub trait NlpProblem: Send + Sync {
    fn dims(&self) -> Dims;
    fn eval_f(&self, x: &[f64]) -> Result<f64, EvalError>;
    fn eval_grad_f(&self, x: &[f64]) -> Result<Vec<f64>, EvalError>;
    fn eval_c(&self, x: &[f64]) -> Result<Vec<f64>, EvalError>;
    fn eval_jac_c(&self, x: &[f64]) -> Result<Triplets, EvalError>;
    fn eval_g(&self, x: &[f64]) -> Result<Vec<f64>, EvalError>;
    fn eval_jac_g(&self, x: &[f64]) -> Result<Triplets, EvalError>;

    /// Lower triangle of `∇²ₓₓL(x, λ, η)`. `None` selects the Gauss-Newton
    /// fallback in the subproblem Hessian.
    fn eval_hess_lagrangian(
        &self,
        _x: &[f64],
        _lambda: &[f64],
        _eta: &[f64],
    ) -> Result<Option<Triplets>, EvalError> {
        Ok(None)
    }

    fn affine_g(&self) -> Option<AffineIneq> {
        None
    }

    /// Preferred elimination order for Newton systems (`perm[new] = old`).
    fn variable_ordering(&self) -> Option<Vec<usize>> {
        None
    }
}

/// The problem-data weight ω of the penalty term; ω = 0 is the
/// equality-constrained limit.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PenaltyWeight(f64);

impl PenaltyWeight {
    pub const ZERO: Self = Self(0.0);

    pub fn new(omega: f64) -> Option<Self> {
        (omega.is_finite() && omega >= 0.0).then_some(Self(omega))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierPair {
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
}

impl MultiplierPair {
    /// Returns `None` if any inequality multiplier is negative.
    pub fn new(lambda: Vec<f64>, eta: Vec<f64>) -> Option<Self> {
        eta.iter().all(|&e| e >= 0.0).then_some(Self { lambda, eta })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            lambda: vec![0.0; dims.m],
            eta: vec![0.0; dims.p],
        }
    }
}

// Checked evaluation: dimensions and finiteness are verified on every call.

pub(crate) fn f(p: &dyn NlpProblem, x: &[f64]) -> Result<f64, EvalError> {
    let v = p.eval_f(x)?;
    ensure_finite("f", &[v])?;
    Ok(v)
}

pub(crate) fn grad_f(p: &dyn NlpProblem, x: &[f64]) -> Result<Vec<f64>, EvalError> {
    let v = p.eval_grad_f(x)?;
    ensure_len("grad_f", p.dims().n, v.len())?;
    ensure_finite("grad_f", &v)?;
    Ok(v)
}

pub(crate) fn c(p: &dyn NlpProblem, x: &[f64]) -> Result<Vec<f64>, EvalError> {
    let v = p.eval_c(x)?;
    ensure_len("c", p.dims().m, v.len())?;
    ensure_finite("c", &v)?;
    Ok(v)
}

pub(crate) fn g(p: &dyn NlpProblem, x: &[f64]) -> Result<Vec<f64>, EvalError> {
    let v = p.eval_g(x)?;
    ensure_len("g", p.dims().p, v.len())?;
    ensure_finite("g", &v)?;
    Ok(v)
}

fn check_triplets(function: &'static str, t: &Triplets, rows: usize, cols: usize) -> Result<(), EvalError> {
    ensure_len(function, rows, t.nrows)?;
    ensure_len(function, cols, t.ncols)?;
    match t.entries.iter().position(|e| !e.2.is_finite()) {
        Some(index) => Err(EvalError::NonFinite { function, index }),
        None => Ok(()),
    }
}

pub(crate) fn jac_c(p: &dyn NlpProblem, x: &[f64]) -> Result<Triplets, EvalError> {
    let d = p.dims();
    let t = p.eval_jac_c(x)?;
    check_triplets("jac_c", &t, d.m, d.n)?;
    Ok(t)
}

pub(crate) fn jac_g(p: &dyn NlpProblem, x: &[f64]) -> Result<Triplets, EvalError> {
    let d = p.dims();
    let t = p.eval_jac_g(x)?;
    check_triplets("jac_g", &t, d.p, d.n)?;
    Ok(t)
}

pub(crate) fn hess_lagrangian(
    p: &dyn NlpProblem,
    x: &[f64],
    lambda: &[f64],
    eta: &[f64],
) -> Result<Option<Triplets>, EvalError> {
    let d = p.dims();
    let h = p.eval_hess_lagrangian(x, lambda, eta)?;
    if let Some(t) = &h {
        check_triplets("hess_lagrangian", t, d.n, d.n)?;
    }
    Ok(h)
}

/// Φ_ω(x) = f(x) + ‖c(x)‖² / (2ω).
pub fn eval_phi(problem: &dyn NlpProblem, omega: PenaltyWeight, x: &[f64]) -> Result<f64, EvalError> {
    let w = omega.value();
    assert!(w > 0.0, "Φ_ω requires ω > 0");
    ensure_len("x", problem.dims().n, x.len())?;
    let fx = f(problem, x)?;
    let cx = c(problem, x)?;
    let sq: f64 = cx.iter().map(|v| v * v).sum();
    let v = fx + 0.5 / w * sq;
    ensure_finite("phi", &[v])?;
    Ok(v)
}

/// λ̃ = λ − (c + ωλ)/(ω + ρ), the multiplier estimate carried by ∇Ψ and the
/// multiplier update of the outer loop.
pub fn first_order_multiplier(c: &[f64], lambda: &[f64], omega: f64, rho: f64) -> Vec<f64> {
    let sigma = omega + rho;
    c.iter()
        .zip(lambda)
        .map(|(&ci, &li)| li - (ci + omega * li) / sigma)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// The first-order multiplier estimate λ̃ at `x`.
    pub lambda_tilde: Vec<f64>,
}

/// Ψ(x) = f − λᵀc + ‖c + ωλ‖² / (2(ω+ρ)) and ∇Ψ = ∇f − ∇cᵀλ̃.
pub fn eval_psi(
    problem: &dyn NlpProblem,
    omega: f64,
    rho: f64,
    lambda: &[f64],
    x: &[f64],
) -> Result<PsiEval, EvalError> {
    let d = problem.dims();
    ensure_len("x", d.n, x.len())?;
    ensure_len("lambda", d.m, lambda.len())?;
    let sigma = omega + rho;
    assert!(sigma > 0.0, "Ψ requires ω + ρ > 0");
    let fx = f(problem, x)?;
    let cx = c(problem, x)?;
    let mut value = fx;
    let mut shifted_sq = 0.0;
    for (&ci, &li) in cx.iter().zip(lambda) {
        value -= li * ci;
        let r = ci + omega * li;
        shifted_sq += r * r;
    }
    value += 0.5 / sigma * shifted_sq;
    ensure_finite("psi", &[value])?;

    let lambda_tilde = first_order_multiplier(&cx, lambda, omega, rho);
    let mut gradient = grad_f(problem, x)?;
    let jac = jac_c(problem, x)?;
    for &(r, col, v) in &jac.entries {
        gradient[col] -= v * lambda_tilde[r];
    }
    ensure_finite("grad_psi", &gradient)?;
    Ok(PsiEval {
        value,
        gradient,
        lambda_tilde,
    })
}

/// Ψ as a subproblem for the interior-point solver: minimize Ψ subject to
/// the problem's inequalities.
///
/// With `omega = 0`, `rho = w` and `lambda = 0` this is exactly the penalty
/// objective Φ_w.
pub struct AugmentedLagrangian<'a> {
    pub problem: &'a dyn NlpProblem,
    pub omega: f64,
    pub rho: f64,
    pub lambda: &'a [f64],
}

impl<'a> AugmentedLagrangian<'a> {
    pub fn new(problem: &'a dyn NlpProblem, omega: f64, rho: f64, lambda: &'a [f64]) -> Self {
        Self {
            problem,
            omega,
            rho,
            lambda,
        }
    }

    pub fn psi(&self, x: &[f64]) -> Result<PsiEval, EvalError> {
        eval_psi(self.problem, self.omega, self.rho, self.lambda, x)
    }
}

impl InnerProblem for AugmentedLagrangian<'_> {
    fn dim(&self) -> usize {
        self.problem.dims().n
    }

    fn num_ineq(&self) -> usize {
        self.problem.dims().p
    }

    fn objective(&self, x: &[f64]) -> Result<ObjectiveEval, EvalError> {
        let e = self.psi(x)?;
        Ok(ObjectiveEval {
            value: e.value,
            multiplier_scale: norm_inf(&e.lambda_tilde),
            gradient: e.gradient,
        })
    }

    fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        let d = self.problem.dims();
        ensure_len("x", d.n, x.len())?;
        let sigma = self.omega + self.rho;
        let fx = f(self.problem, x)?;
        let cx = c(self.problem, x)?;
        let mut value = fx;
        let mut shifted_sq = 0.0;
        for (&ci, &li) in cx.iter().zip(self.lambda) {
            value -= li * ci;
            let r = ci + self.omega * li;
            shifted_sq += r * r;
        }
        value += 0.5 / sigma * shifted_sq;
        ensure_finite("psi", &[value])?;
        Ok(value)
    }

    fn hessian(&self, x: &[f64], eta: &[f64]) -> Result<Triplets, EvalError> {
        let sigma = self.omega + self.rho;
        let cx = c(self.problem, x)?;
        let lambda_tilde = first_order_multiplier(&cx, self.lambda, self.omega, self.rho);
        let jac = jac_c(self.problem, x)?;
        let mut h = match hess_lagrangian(self.problem, x, &lambda_tilde, eta)? {
            Some(h) => h,
            None => Triplets::new(self.dim(), self.dim()),
        };
        let gn = jac.gram_lower(1.0 / sigma);
        h.entries.extend_from_slice(&gn.entries);
        Ok(h)
    }

    fn ineq(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        g(self.problem, x)
    }

    fn ineq_jacobian(&self, x: &[f64]) -> Result<Triplets, EvalError> {
        jac_g(self.problem, x)
    }

    fn ordering(&self) -> Option<Vec<usize>> {
        self.problem.variable_ordering()
    }
}

/// The equality-constrained reformulation in `x̂ = (x, ξ)`:
/// f̂ = f + (ω/2)‖ξ‖², ĉ = c(x) + ωξ, ĝ = g(x).
pub struct Lifted<'a> {
    base: &'a dyn NlpProblem,
    omega: f64,
}

pub fn lift(problem: &dyn NlpProblem, omega: PenaltyWeight) -> Lifted<'_> {
    assert!(omega.value() > 0.0, "lifting requires ω > 0");
    Lifted {
        base: problem,
        omega: omega.value(),
    }
}

impl Lifted<'_> {
    pub fn omega(&self) -> f64 {
        self.omega
    }

    fn split<'x>(&self, xh: &'x [f64]) -> (&'x [f64], &'x [f64]) {
        xh.split_at(self.base.dims().n)
    }

    /// ξ = (ρλ − c(x)) / (ω + ρ), the unique ξ-block of a subproblem
    /// minimizer given `x` and the previous multiplier.
    pub fn xi_for(&self, x: &[f64], lambda: &[f64], rho: f64) -> Result<Vec<f64>, EvalError> {
        let cx = c(self.base, x)?;
        let sigma = self.omega + rho;
        Ok(cx
            .iter()
            .zip(lambda)
            .map(|(&ci, &li)| (rho * li - ci) / sigma)
            .collect())
    }

    /// Initial point `(x₀, ξ₀)` matched to a start `(x₀, λ₀)` of the
    /// original problem.
    pub fn start(&self, x0: &[f64], lambda0: &[f64], rho0: f64) -> Result<Vec<f64>, EvalError> {
        let mut xh = x0.to_vec();
        xh.extend(self.xi_for(x0, lambda0, rho0)?);
        Ok(xh)
    }
}

impl NlpProblem for Lifted<'_> {
    fn dims(&self) -> Dims {
        let d = self.base.dims();
        Dims {
            n: d.n + d.m,
            m: d.m,
            p: d.p,
        }
    }

    fn eval_f(&self, xh: &[f64]) -> Result<f64, EvalError> {
        let (x, xi) = self.split(xh);
        let sq: f64 = xi.iter().map(|v| v * v).sum();
        Ok(self.base.eval_f(x)? + 0.5 * self.omega * sq)
    }

    fn eval_grad_f(&self, xh: &[f64]) -> Result<Vec<f64>, EvalError> {
        let (x, xi) = self.split(xh);
        let mut gr = self.base.eval_grad_f(x)?;
        gr.extend(xi.iter().map(|v| self.omega * v));
        Ok(gr)
    }

    fn eval_c(&self, xh: &[f64]) -> Result<Vec<f64>, EvalError> {
        let (x, xi) = self.split(xh);
        let mut cx = self.base.eval_c(x)?;
        for (ci, &v) in cx.iter_mut().zip(xi) {
            *ci += self.omega * v;
        }
        Ok(cx)
    }

    fn eval_jac_c(&self, xh: &[f64]) -> Result<Triplets, EvalError> {
        let d = self.base.dims();
        let (x, _) = self.split(xh);
        let jb = self.base.eval_jac_c(x)?;
        let mut j = Triplets::with_capacity(d.m, d.n + d.m, jb.entries.len() + d.m);
        j.append_shifted(&jb, 0, 0);
        for i in 0..d.m {
            j.push(i, d.n + i, self.omega);
        }
        Ok(j)
    }

    fn eval_g(&self, xh: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.base.eval_g(self.split(xh).0)
    }

    fn eval_jac_g(&self, xh: &[f64]) -> Result<Triplets, EvalError> {
        let d = self.base.dims();
        let jb = self.base.eval_jac_g(self.split(xh).0)?;
        let mut j = Triplets::with_capacity(d.p, d.n + d.m, jb.entries.len());
        j.append_shifted(&jb, 0, 0);
        Ok(j)
    }

    fn eval_hess_lagrangian(
        &self,
        xh: &[f64],
        lambda: &[f64],
        eta: &[f64],
    ) -> Result<Option<Triplets>, EvalError> {
        let d = self.base.dims();
        let (x, _) = self.split(xh);
        let Some(hb) = self.base.eval_hess_lagrangian(x, lambda, eta)? else {
            return Ok(None);
        };
        let mut h = Triplets::with_capacity(d.n + d.m, d.n + d.m, hb.entries.len() + d.m);
        h.append_shifted(&hb, 0, 0);
        // ĉ is linear in ξ, so only f̂ contributes curvature there.
        for i in 0..d.m {
            h.push(d.n + i, d.n + i, self.omega);
        }
        Ok(Some(h))
    }

    fn affine_g(&self) -> Option<AffineIneq> {
        let d = self.base.dims();
        self.base.affine_g().map(|AffineIneq { a, b }| {
            let mut ah = Triplets::new(d.p, d.n + d.m);
            ah.append_shifted(&a, 0, 0);
            AffineIneq { a: ah, b }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_circle, CircleParams};

    /// Φ and Ψ for the circle instance written out by hand.
    fn circle_by_hand(eps: f64, x: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let f = -x[0];
        let c = [
            (x[0] + eps).powi(2) + x[1].powi(2) - 2.0,
            (x[0] - eps).powi(2) + x[1].powi(2) - 2.0,
        ];
        let j = [[2.0 * (x[0] + eps), 2.0 * x[1]], [2.0 * (x[0] - eps), 2.0 * x[1]]];
        (f, c, j)
    }

    #[test]
    fn phi_on_circle_points() {
        let p = make_circle(CircleParams { epsilon: 0.0 });
        for w in [1e-8, 0.1, 1.0, 10.0] {
            let v = eval_phi(&p, PenaltyWeight::new(w).unwrap(), &[1.0, 1.0]).unwrap();
            assert_eq!(v, -1.0);
        }
        let v = eval_phi(&p, PenaltyWeight::new(1.0).unwrap(), &[2.0, 1.0]).unwrap();
        assert!((v - 7.0).abs() < 1e-14);
    }

    #[test]
    fn psi_matches_hand_evaluation() {
        let p = make_circle(CircleParams { epsilon: 0.0 });
        let (omega, rho, lambda, x) = (0.1, 0.9, [1.0, 0.0], [2.0, 1.0]);
        let (f, c, j) = circle_by_hand(0.0, x);
        // c = [3, 3]; c + ωλ = [3.1, 3]; σ = 1
        let expect = f - (lambda[0] * c[0] + lambda[1] * c[1])
            + 0.5 * ((c[0] + omega * lambda[0]).powi(2) + (c[1] + omega * lambda[1]).powi(2));
        assert!((expect - (-2.0 - 3.0 + 0.5 * (9.61 + 9.0))).abs() < 1e-12);
        let lt = [
            lambda[0] - (c[0] + omega * lambda[0]),
            lambda[1] - (c[1] + omega * lambda[1]),
        ];
        let grad = [
            -1.0 - j[0][0] * lt[0] - j[1][0] * lt[1],
            -j[0][1] * lt[0] - j[1][1] * lt[1],
        ];
        let e = eval_psi(&p, omega, rho, &lambda, &x).unwrap();
        assert!((e.value - expect).abs() < 1e-12);
        assert!((e.gradient[0] - grad[0]).abs() < 1e-12);
        assert!((e.gradient[1] - grad[1]).abs() < 1e-12);
        assert_eq!(e.lambda_tilde, lt.to_vec());
    }

    #[test]
    fn psi_with_zero_multiplier_is_phi() {
        let p = make_circle(CircleParams { epsilon: 0.1 });
        for (omega, rho) in [(0.1, 0.9), (1e-6, 1e-3), (0.0, 0.5)] {
            for x in [[2.0, 1.0], [0.3, -0.7], [1.0, 1.0]] {
                let psi = eval_psi(&p, omega, rho, &[0.0, 0.0], &x).unwrap().value;
                let phi = eval_phi(&p, PenaltyWeight::new(omega + rho).unwrap(), &x).unwrap();
                assert!((psi - phi).abs() <= 1e-14 * phi.abs().max(1.0));
            }
        }
    }

    #[test]
    fn psi_at_zero_omega_is_classical_al() {
        let p = make_circle(CircleParams { epsilon: 0.01 });
        let (rho, lambda, x) = (0.3, [0.2, -0.5], [0.7, 1.2]);
        let (f, c, _) = circle_by_hand(0.01, x);
        let expect = f - lambda[0] * c[0] - lambda[1] * c[1] + (c[0] * c[0] + c[1] * c[1]) / (2.0 * rho);
        let v = eval_psi(&p, 0.0, rho, &lambda, &x).unwrap().value;
        assert!((v - expect).abs() < 1e-13);
    }

    #[test]
    fn phi_without_constraints_is_f() {
        struct Quad;
        impl NlpProblem for Quad {
            fn dims(&self) -> Dims {
                Dims { n: 1, m: 0, p: 0 }
            }
            fn eval_f(&self, x: &[f64]) -> Result<f64, EvalError> {
                Ok(x[0] * x[0])
            }
            fn eval_grad_f(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
                Ok(vec![2.0 * x[0]])
            }
            fn eval_c(&self, _: &[f64]) -> Result<Vec<f64>, EvalError> {
                Ok(vec![])
            }
            fn eval_jac_c(&self, _: &[f64]) -> Result<Triplets, EvalError> {
                Ok(Triplets::new(0, 1))
            }
            fn eval_g(&self, _: &[f64]) -> Result<Vec<f64>, EvalError> {
                Ok(vec![])
            }
            fn eval_jac_g(&self, _: &[f64]) -> Result<Triplets, EvalError> {
                Ok(Triplets::new(0, 1))
            }
        }
        let v = eval_phi(&Quad, PenaltyWeight::new(1e-3).unwrap(), &[3.0]).unwrap();
        assert_eq!(v, 9.0);
    }

    #[test]
    fn non_finite_output_is_reported_with_index() {
        let p = make_circle(CircleParams { epsilon: 0.0 });
        let err = eval_phi(&p, PenaltyWeight::new(1.0).unwrap(), &[f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, EvalError::NonFinite { function: "f", index: 0 }));
        let err = eval_psi(&p, 0.0, 1.0, &[0.0, 0.0], &[1.0, f64::INFINITY]).unwrap_err();
        assert!(matches!(err, EvalError::NonFinite { function: "c", index: 0 }));
    }

    #[test]
    fn lifted_dimensions_and_feasibility_witness() {
        let p = make_circle(CircleParams { epsilon: 0.1 });
        let omega = 0.05;
        let l = lift(&p, PenaltyWeight::new(omega).unwrap());
        assert_eq!(l.dims(), Dims { n: 4, m: 2, p: 2 });
        for x in [[2.0, 1.0], [0.1, 0.3], [-1.0, 4.0]] {
            let cx = p.eval_c(&x).unwrap();
            let xh = [x[0], x[1], -cx[0] / omega, -cx[1] / omega];
            for v in l.eval_c(&xh).unwrap() {
                assert!(v.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn psi_reduced_over_xi_equals_original_psi() {
        // min over ξ of the lifted Ψ̂ (ω̂ = 0) is attained at ξ(x, λ) and
        // equals Ψ(x) minus the λ-only constant (ω/2)‖λ‖².
        let p = make_circle(CircleParams { epsilon: 0.01 });
        let (omega, rho) = (0.02, 0.3);
        let l = lift(&p, PenaltyWeight::new(omega).unwrap());
        let lambda = [0.4, -0.1];
        let x = [0.8, 1.3];
        let mut xh = x.to_vec();
        xh.extend(l.xi_for(&x, &lambda, rho).unwrap());
        let lifted = eval_psi(&l, 0.0, rho, &lambda, &xh).unwrap();
        let orig = eval_psi(&p, omega, rho, &lambda, &x).unwrap();
        let shift = 0.5 * omega * (lambda[0].powi(2) + lambda[1].powi(2));
        assert!((lifted.value - (orig.value - shift)).abs() < 1e-12);
        for i in 0..2 {
            assert!((lifted.gradient[i] - orig.gradient[i]).abs() < 1e-12);
            assert!(lifted.gradient[2 + i].abs() < 1e-12);
        }
    }
}
