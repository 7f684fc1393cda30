//! Integral-penalty transcription of a bang-singular optimal control problem.
//!
//! ```text
//! min ∫₀⁵ y² + t·u dt   s.t.  y(0) = 0.5,  ẏ = y²/2 + u,  y, u ∈ [−1, 1]
//! ```
//!
//! `y` is continuous piecewise linear, `u` piecewise linear and
//! discontinuous across element boundaries. The dynamics residual is sampled
//! at Gauss-Legendre points, scaled by √αⱼ so that `‖c‖²` is the quadrature
//! of the squared defect. Variables follow the layout
//! `[y₁ … y_N, u⁺₀, u⁻₁, u⁺₁, …, u⁻_N]`.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, EvalError};
use crate::linalg::Triplets;
use crate::nlp::{AffineIneq, Dims, NlpProblem};
use crate::problems::quadrature::{gauss_legendre, UnitRule};

pub const HORIZON: f64 = 5.0;
pub const Y0: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct OcpMesh {
    intervals: usize,
    h: f64,
    rule: UnitRule,
}

impl OcpMesh {
    pub fn new(intervals: usize, q: usize) -> Result<Self, ConfigError> {
        if intervals == 0 {
            return Err(ConfigError::option("N", "mesh needs at least one interval"));
        }
        if q == 0 {
            return Err(ConfigError::option("q", "need at least one quadrature point"));
        }
        Ok(Self {
            intervals,
            h: HORIZON / intervals as f64,
            rule: gauss_legendre(q),
        })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn q(&self) -> usize {
        self.rule.len()
    }

    /// Local quadrature nodes θⱼ ∈ (0, 1).
    pub fn nodes(&self) -> &[f64] {
        &self.rule.nodes
    }

    /// Quadrature weights αⱼ, identical on every interval and summing to h.
    pub fn alpha(&self) -> Vec<f64> {
        self.rule.weights.iter().map(|w| w * self.h).collect()
    }

    pub fn dims(&self) -> Dims {
        let n = 3 * self.intervals;
        Dims {
            n,
            m: self.q() * self.intervals,
            p: 2 * n,
        }
    }

    /// Position of `y(i·h)`; `None` for the fixed initial value.
    pub fn y_index(&self, node: usize) -> Option<usize> {
        assert!(node <= self.intervals);
        node.checked_sub(1)
    }

    /// Position of `u⁺(i·h)`, the right limit at the start of interval `i + 1`.
    pub fn u_plus_index(&self, node: usize) -> usize {
        assert!(node < self.intervals);
        self.intervals + 2 * node
    }

    /// Position of `u⁻(i·h)`, the left limit at the end of interval `i`.
    pub fn u_minus_index(&self, node: usize) -> usize {
        assert!(node >= 1 && node <= self.intervals);
        self.intervals + 2 * node - 1
    }

    /// Row of `c` for quadrature point `j` of interval `i` (1-based).
    pub fn point_index(&self, interval: usize, j: usize) -> usize {
        (interval - 1) * self.q() + j
    }

    pub fn point_time(&self, interval: usize, j: usize) -> f64 {
        (interval as f64 - 1.0 + self.rule.nodes[j]) * self.h
    }

    fn local(&self, x: &[f64], interval: usize) -> Element {
        Element {
            y_prev: self.y_index(interval - 1).map_or(Y0, |k| x[k]),
            y_cur: x[interval - 1],
            u_start: x[self.u_plus_index(interval - 1)],
            u_end: x[self.u_minus_index(interval)],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Element {
    y_prev: f64,
    y_cur: f64,
    u_start: f64,
    u_end: f64,
}

impl Element {
    fn y(&self, theta: f64) -> f64 {
        (1.0 - theta) * self.y_prev + theta * self.y_cur
    }

    fn u(&self, theta: f64) -> f64 {
        (1.0 - theta) * self.u_start + theta * self.u_end
    }

    fn y_dot(&self, h: f64) -> f64 {
        (self.y_cur - self.y_prev) / h
    }
}

#[derive(Debug, Clone)]
pub struct Ocp {
    mesh: OcpMesh,
}

pub fn make_ocp(intervals: usize, q: usize) -> Result<Ocp, ConfigError> {
    Ok(Ocp {
        mesh: OcpMesh::new(intervals, q)?,
    })
}

/// One sample of the discrete trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub y: f64,
    pub u: f64,
}

impl Ocp {
    pub fn mesh(&self) -> &OcpMesh {
        &self.mesh
    }

    /// Samples `(t, y_h, u_h)` at both ends and the quadrature points of every
    /// interval, so shared nodes appear once per adjacent interval with the
    /// respective one-sided control value.
    pub fn trajectory(&self, x: &[f64]) -> Vec<TrajectorySample> {
        let mesh = &self.mesh;
        let mut thetas = vec![0.0];
        thetas.extend_from_slice(mesh.nodes());
        thetas.push(1.0);
        let mut out = Vec::with_capacity(mesh.intervals * thetas.len());
        for i in 1..=mesh.intervals {
            let e = mesh.local(x, i);
            for &th in &thetas {
                out.push(TrajectorySample {
                    t: (i as f64 - 1.0 + th) * mesh.h,
                    y: e.y(th),
                    u: e.u(th),
                });
            }
        }
        out
    }

    /// Returns ‖c(x)‖², the quadrature of the squared dynamics defect.
    pub fn feasibility_residual(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(self.eval_c(x)?.iter().map(|v| v * v).sum())
    }
}

impl NlpProblem for Ocp {
    fn dims(&self) -> Dims {
        self.mesh.dims()
    }

    fn eval_f(&self, x: &[f64]) -> Result<f64, EvalError> {
        let mesh = &self.mesh;
        let alpha = mesh.alpha();
        let mut total = 0.0;
        for i in 1..=mesh.intervals {
            let e = mesh.local(x, i);
            for (j, &th) in mesh.nodes().iter().enumerate() {
                let y = e.y(th);
                total += alpha[j] * (y * y + mesh.point_time(i, j) * e.u(th));
            }
        }
        Ok(total)
    }

    fn eval_grad_f(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mesh = &self.mesh;
        let alpha = mesh.alpha();
        let mut grad = vec![0.0; mesh.dims().n];
        for i in 1..=mesh.intervals {
            let e = mesh.local(x, i);
            for (j, &th) in mesh.nodes().iter().enumerate() {
                let dy = 2.0 * alpha[j] * e.y(th);
                let du = alpha[j] * mesh.point_time(i, j);
                if let Some(k) = mesh.y_index(i - 1) {
                    grad[k] += dy * (1.0 - th);
                }
                grad[i - 1] += dy * th;
                grad[mesh.u_plus_index(i - 1)] += du * (1.0 - th);
                grad[mesh.u_minus_index(i)] += du * th;
            }
        }
        Ok(grad)
    }

    fn eval_c(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mesh = &self.mesh;
        let alpha = mesh.alpha();
        let mut c = vec![0.0; mesh.dims().m];
        for i in 1..=mesh.intervals {
            let e = mesh.local(x, i);
            let yd = e.y_dot(mesh.h);
            for (j, &th) in mesh.nodes().iter().enumerate() {
                let y = e.y(th);
                c[mesh.point_index(i, j)] = alpha[j].sqrt() * (0.5 * y * y + e.u(th) - yd);
            }
        }
        Ok(c)
    }

    fn eval_jac_c(&self, x: &[f64]) -> Result<Triplets, EvalError> {
        let mesh = &self.mesh;
        let alpha = mesh.alpha();
        let d = mesh.dims();
        let mut jac = Triplets::with_capacity(d.m, d.n, 4 * d.m);
        let inv_h = 1.0 / mesh.h;
        for i in 1..=mesh.intervals {
            let e = mesh.local(x, i);
            for (j, &th) in mesh.nodes().iter().enumerate() {
                let row = mesh.point_index(i, j);
                let w = alpha[j].sqrt();
                let y = e.y(th);
                if let Some(k) = mesh.y_index(i - 1) {
                    jac.push(row, k, w * (y * (1.0 - th) + inv_h));
                }
                jac.push(row, i - 1, w * (y * th - inv_h));
                jac.push(row, mesh.u_plus_index(i - 1), w * (1.0 - th));
                jac.push(row, mesh.u_minus_index(i), w * th);
            }
        }
        Ok(jac)
    }

    fn eval_g(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut g: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
        g.extend(x.iter().map(|v| 1.0 + v));
        Ok(g)
    }

    fn eval_jac_g(&self, _x: &[f64]) -> Result<Triplets, EvalError> {
        let n = self.mesh.dims().n;
        let mut jac = Triplets::with_capacity(2 * n, n, 2 * n);
        for k in 0..n {
            jac.push(k, k, -1.0);
        }
        for k in 0..n {
            jac.push(n + k, k, 1.0);
        }
        Ok(jac)
    }

    fn eval_hess_lagrangian(
        &self,
        _x: &[f64],
        lambda: &[f64],
        _eta: &[f64],
    ) -> Result<Option<Triplets>, EvalError> {
        let mesh = &self.mesh;
        let alpha = mesh.alpha();
        let n = mesh.dims().n;
        let mut h = Triplets::with_capacity(n, n, 3 * mesh.dims().m);
        for i in 1..=mesh.intervals {
            for (j, &th) in mesh.nodes().iter().enumerate() {
                // y_h is linear in the two nodal values, so y² and y²/2 both
                // contribute multiples of φφᵀ with φ = (1 − θ, θ).
                let coef = 2.0 * alpha[j] - lambda[mesh.point_index(i, j)] * alpha[j].sqrt();
                let cur = i - 1;
                h.push(cur, cur, coef * th * th);
                if let Some(prev) = mesh.y_index(i - 1) {
                    h.push(prev, prev, coef * (1.0 - th) * (1.0 - th));
                    h.push(cur, prev, coef * th * (1.0 - th));
                }
            }
        }
        Ok(Some(h))
    }

    fn affine_g(&self) -> Option<AffineIneq> {
        let n = self.mesh.dims().n;
        Some(AffineIneq {
            a: self.eval_jac_g(&[]).expect("constant Jacobian"),
            b: vec![-1.0; 2 * n],
        })
    }

    fn variable_ordering(&self) -> Option<Vec<usize>> {
        let mesh = &self.mesh;
        let mut perm = Vec::with_capacity(mesh.dims().n);
        for i in 1..=mesh.intervals {
            perm.push(mesh.u_plus_index(i - 1));
            perm.push(mesh.u_minus_index(i));
            perm.push(i - 1);
        }
        Some(perm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpMetrics {
    /// Optimality gap `f(x) − J_ref`.
    pub delta_j: f64,
    /// Feasibility residual `‖c(x)‖²`.
    pub r: f64,
}

pub fn ocp_metrics(ocp: &Ocp, x_inf: &[f64], j_ref: f64) -> Result<OcpMetrics, EvalError> {
    Ok(OcpMetrics {
        delta_j: ocp.eval_f(x_inf)? - j_ref,
        r: ocp.feasibility_residual(x_inf)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_and_layout() {
        let ocp = make_ocp(1, 2).unwrap();
        assert_eq!(ocp.dims(), Dims { n: 3, m: 2, p: 6 });
        let mesh = make_ocp(4, 2).unwrap().mesh;
        assert_eq!(mesh.u_plus_index(0), 4);
        assert_eq!(mesh.u_minus_index(1), 5);
        assert_eq!(mesh.u_plus_index(1), 6);
        assert_eq!(mesh.u_minus_index(4), 11);
        assert_eq!(mesh.y_index(0), None);
        assert_eq!(mesh.y_index(4), Some(3));
        assert!(make_ocp(0, 2).is_err());
    }

    #[test]
    fn weights_partition_each_interval() {
        for q in 1..=4 {
            let mesh = OcpMesh::new(7, q).unwrap();
            let a = mesh.alpha();
            assert!(a.iter().all(|&w| w > 0.0));
            assert!((a.iter().sum::<f64>() - mesh.h()).abs() < 1e-15);
        }
    }

    #[test]
    fn objective_integrates_time_exactly() {
        let ocp = make_ocp(10, 2).unwrap();
        let mesh = ocp.mesh();
        let mut x = vec![0.0; 30];
        for i in 0..10 {
            x[mesh.u_plus_index(i)] = 1.0;
            x[mesh.u_minus_index(i + 1)] = 1.0;
        }
        // y_h ≡ 0 only after the first interval; the first interval decays
        // from y₀, contributing ∫₀ʰ (y₀(1 − t/h))² dt = y₀² h / 3.
        let expect = 12.5 + Y0 * Y0 * mesh.h() / 3.0;
        assert!((ocp.eval_f(&x).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn jacobian_rows_touch_local_variables() {
        let ocp = make_ocp(6, 3).unwrap();
        let mesh = ocp.mesh();
        let x: Vec<f64> = (0..18).map(|k| (k as f64 * 0.37).sin() * 0.8).collect();
        let jac = ocp.eval_jac_c(&x).unwrap();
        for (row, cols) in jac.row_lists().iter().enumerate() {
            let interval = row / mesh.q() + 1;
            let mut allowed = vec![interval - 1, mesh.u_plus_index(interval - 1), mesh.u_minus_index(interval)];
            if let Some(k) = mesh.y_index(interval - 1) {
                allowed.push(k);
            }
            assert!(cols.len() <= 4);
            assert!(cols.iter().all(|(c, _)| allowed.contains(c)), "row {row}");
        }
    }
}
