//! Two nearly coincident circles intersected with a wedge.
//!
//! ```text
//! min −x₁  s.t.  (x₁ ± ε)² + x₂² − 2 = 0,  x₁ ≥ 0,  x₂ − x₁ ≥ 0
//! ```
//!
//! For ε > 0 the circles meet only at [`X_A`]; for ε = 0 they coincide and
//! the minimizer jumps to [`X_B`].

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::linalg::{norm2, Triplets};
use crate::nlp::{AffineIneq, Dims, NlpProblem};

pub const X_A: [f64; 2] = [0.0, std::f64::consts::SQRT_2];
pub const X_B: [f64; 2] = [1.0, 1.0];

/// Starting point used by the circle experiments.
pub const CIRCLE_X0: [f64; 2] = [2.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleParams {
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct Circle {
    eps: f64,
}

pub fn make_circle(params: CircleParams) -> Circle {
    assert!(params.epsilon.is_finite(), "epsilon must be finite");
    Circle {
        eps: params.epsilon,
    }
}

impl Circle {
    pub fn epsilon(&self) -> f64 {
        self.eps
    }
}

impl NlpProblem for Circle {
    fn dims(&self) -> Dims {
        Dims { n: 2, m: 2, p: 2 }
    }

    fn eval_f(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(-x[0])
    }

    fn eval_grad_f(&self, _x: &[f64]) -> Result<Vec<f64>, EvalError> {
        Ok(vec![-1.0, 0.0])
    }

    fn eval_c(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let y2 = x[1] * x[1];
        Ok(vec![
            (x[0] + self.eps).powi(2) + y2 - 2.0,
            (x[0] - self.eps).powi(2) + y2 - 2.0,
        ])
    }

    fn eval_jac_c(&self, x: &[f64]) -> Result<Triplets, EvalError> {
        let mut j = Triplets::with_capacity(2, 2, 4);
        j.push(0, 0, 2.0 * (x[0] + self.eps));
        j.push(0, 1, 2.0 * x[1]);
        j.push(1, 0, 2.0 * (x[0] - self.eps));
        j.push(1, 1, 2.0 * x[1]);
        Ok(j)
    }

    fn eval_g(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        Ok(vec![x[0], x[1] - x[0]])
    }

    fn eval_jac_g(&self, _x: &[f64]) -> Result<Triplets, EvalError> {
        let mut j = Triplets::with_capacity(2, 2, 3);
        j.push(0, 0, 1.0);
        j.push(1, 0, -1.0);
        j.push(1, 1, 1.0);
        Ok(j)
    }

    fn eval_hess_lagrangian(
        &self,
        _x: &[f64],
        lambda: &[f64],
        _eta: &[f64],
    ) -> Result<Option<Triplets>, EvalError> {
        let d = -2.0 * (lambda[0] + lambda[1]);
        let mut h = Triplets::with_capacity(2, 2, 2);
        h.push(0, 0, d);
        h.push(1, 1, d);
        Ok(Some(h))
    }

    fn affine_g(&self) -> Option<AffineIneq> {
        Some(AffineIneq {
            a: self.eval_jac_g(&[0.0, 0.0]).expect("constant Jacobian"),
            b: vec![0.0, 0.0],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleMetrics {
    pub e_a: f64,
    pub e_b: f64,
}

pub fn circle_metrics(x_inf: &[f64]) -> CircleMetrics {
    assert_eq!(x_inf.len(), 2, "circle solutions have two components");
    let dist = |p: &[f64; 2]| norm2(&[x_inf[0] - p[0], x_inf[1] - p[1]]);
    CircleMetrics {
        e_a: dist(&X_A),
        e_b: dist(&X_B),
    }
}
