//! Dense convex QP fixture and its active-set enumeration oracle.

use nalgebra::{DMatrix, DVector};
use qpp_core::inner::{InnerProblem, ObjectiveEval};
use qpp_core::linalg::Triplets;
use qpp_core::EvalError;

/// `min ½xᵀHx + gᵀx  s.t.  Ax ≥ b`
#[derive(Debug, Clone)]
pub struct Qp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl InnerProblem for Qp {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn num_ineq(&self) -> usize {
        self.a.nrows()
    }

    fn objective(&self, x: &[f64]) -> Result<ObjectiveEval, EvalError> {
        let x = DVector::from_column_slice(x);
        let hx = &self.h * &x;
        Ok(ObjectiveEval {
            value: 0.5 * x.dot(&hx) + self.g.dot(&x),
            gradient: (hx + &self.g).as_slice().to_vec(),
            multiplier_scale: 0.0,
        })
    }

    fn hessian(&self, _x: &[f64], _eta: &[f64]) -> Result<Triplets, EvalError> {
        let n = self.dim();
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            for j in 0..=i {
                t.push(i, j, self.h[(i, j)]);
            }
        }
        Ok(t)
    }

    fn ineq(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let x = DVector::from_column_slice(x);
        Ok((&self.a * x - &self.b).as_slice().to_vec())
    }

    fn ineq_jacobian(&self, _x: &[f64]) -> Result<Triplets, EvalError> {
        let mut t = Triplets::new(self.num_ineq(), self.dim());
        for i in 0..self.num_ineq() {
            for j in 0..self.dim() {
                t.push(i, j, self.a[(i, j)]);
            }
        }
        Ok(t)
    }
}

/// Solves the QP by trying every active set and keeping the candidate that
/// is primal and dual feasible.
pub fn active_set_oracle(qp: &Qp) -> (DVector<f64>, DVector<f64>) {
    let (n, p) = (qp.h.nrows(), qp.a.nrows());
    let mut best: Option<(DVector<f64>, DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << p) {
        let act: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        if act.len() > n {
            continue;
        }
        let k = act.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        for i in 0..n {
            rhs[i] = -qp.g[i];
        }
        for (r, &j) in act.iter().enumerate() {
            for i in 0..n {
                kkt[(i, n + r)] = -qp.a[(j, i)];
                kkt[(n + r, i)] = qp.a[(j, i)];
            }
            rhs[n + r] = qp.b[j];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let mut eta = DVector::zeros(p);
        for (r, &j) in act.iter().enumerate() {
            eta[j] = sol[n + r];
        }
        let slack = &qp.a * &x - &qp.b;
        if slack.iter().all(|&v| v >= -1e-10) && eta.iter().all(|&v| v >= -1e-10) {
            let val = 0.5 * x.dot(&(&qp.h * &x)) + qp.g.dot(&x);
            if best.as_ref().map_or(true, |b| val < b.2) {
                best = Some((x, eta, val));
            }
        }
    }
    let (x, eta, _) = best.expect("feasible QP has a KKT point");
    (x, eta)
}

impl Qp {
    /// `H = MᵀM + I/2`, `Ax ≥ b` with `b = A x_f − gap` so that `x_f` is feasible.
    pub fn from_parts(n: usize, p: usize, m: &[f64], g: Vec<f64>, a: &[f64], x_feasible: Vec<f64>, gap: Vec<f64>) -> Self {
        let m = DMatrix::from_row_slice(n, n, m);
        let h = m.transpose() * &m + DMatrix::identity(n, n) * 0.5;
        let a = DMatrix::from_row_slice(p, n, a);
        let b = &a * DVector::from_vec(x_feasible) - DVector::from_vec(gap);
        Qp {
            h,
            g: DVector::from_vec(g),
            a,
            b,
        }
    }
}
