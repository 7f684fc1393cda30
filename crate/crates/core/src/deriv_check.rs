//! Central finite-difference checks of analytic derivatives.

use serde::Serialize;

use crate::error::EvalError;
use crate::inner::InnerProblem;
use crate::linalg::Triplets;
use crate::nlp::{self, NlpProblem};

pub const DEFAULT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstEntry {
    pub function: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub function: String,
    pub max_rel_error: f64,
    pub worst_entry: Option<WorstEntry>,
    pub threshold: f64,
    pub pass: bool,
}

fn step(xi: f64) -> f64 {
    f64::EPSILON.cbrt() * xi.abs().max(1.0)
}

/// Compares `analytic` (rows × cols, dense row-major) against central
/// differences of the vector map `eval`.
fn compare(
    name: &str,
    eval: &dyn Fn(&[f64]) -> Result<Vec<f64>, EvalError>,
    analytic: &[Vec<f64>],
    x: &[f64],
    threshold: f64,
) -> Result<CheckReport, EvalError> {
    let mut worst: Option<WorstEntry> = None;
    let mut max_rel = 0f64;
    let mut xp = x.to_vec();
    for col in 0..x.len() {
        let h = step(x[col]);
        let (hi, lo) = (x[col] + h, x[col] - h);
        xp[col] = hi;
        let fp = eval(&xp)?;
        xp[col] = lo;
        let fm = eval(&xp)?;
        xp[col] = x[col];
        for (row, a_row) in analytic.iter().enumerate() {
            let numeric = (fp[row] - fm[row]) / (hi - lo);
            let analytic = a_row[col];
            let rel = (analytic - numeric).abs() / analytic.abs().max(1.0);
            if !rel.is_finite() {
                return Err(EvalError::NonFinite {
                    function: "finite difference",
                    index: row,
                });
            }
            if worst.is_none() || rel > max_rel {
                max_rel = rel;
                worst = Some(WorstEntry {
                    function: name.to_string(),
                    row,
                    col,
                    analytic,
                    numeric,
                });
            }
        }
    }
    Ok(CheckReport {
        function: name.to_string(),
        max_rel_error: max_rel,
        worst_entry: worst,
        threshold,
        pass: max_rel <= threshold,
    })
}

fn dense_rows(t: &Triplets) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; t.ncols]; t.nrows];
    for &(r, c, v) in &t.entries {
        rows[r][c] += v;
    }
    rows
}

/// Checks `fun(x) = (value, gradient)`.
pub fn check_gradient(
    name: &str,
    fun: &dyn Fn(&[f64]) -> Result<(f64, Vec<f64>), EvalError>,
    x: &[f64],
    threshold: f64,
) -> Result<CheckReport, EvalError> {
    let (_, grad) = fun(x)?;
    let value = |z: &[f64]| fun(z).map(|(v, _)| vec![v]);
    compare(name, &value, &[grad], x, threshold)
}

/// Checks `fun(x) = (values, jacobian)` row by row.
pub fn check_jacobian(
    name: &str,
    fun: &dyn Fn(&[f64]) -> Result<(Vec<f64>, Triplets), EvalError>,
    x: &[f64],
    threshold: f64,
) -> Result<CheckReport, EvalError> {
    let (_, jac) = fun(x)?;
    let values = |z: &[f64]| fun(z).map(|(v, _)| v);
    compare(name, &values, &dense_rows(&jac), x, threshold)
}

/// Checks ∇f, ∇c, ∇g and the Lagrangian Hessian of `problem` at `x`.
pub fn check_problem(
    problem: &dyn NlpProblem,
    x: &[f64],
    lambda: &[f64],
    eta: &[f64],
    threshold: f64,
) -> Result<Vec<CheckReport>, EvalError> {
    let mut out = vec![
        check_gradient(
            "grad_f",
            &|z| Ok((nlp::f(problem, z)?, nlp::grad_f(problem, z)?)),
            x,
            threshold,
        )?,
        check_jacobian(
            "jac_c",
            &|z| Ok((nlp::c(problem, z)?, nlp::jac_c(problem, z)?)),
            x,
            threshold,
        )?,
        check_jacobian(
            "jac_g",
            &|z| Ok((nlp::g(problem, z)?, nlp::jac_g(problem, z)?)),
            x,
            threshold,
        )?,
    ];
    if let Some(hess) = nlp::hess_lagrangian(problem, x, lambda, eta)? {
        let lagrangian_grad = |z: &[f64]| -> Result<Vec<f64>, EvalError> {
            let mut gr = nlp::grad_f(problem, z)?;
            for &(r, c, v) in &nlp::jac_c(problem, z)?.entries {
                gr[c] -= v * lambda[r];
            }
            for &(r, c, v) in &nlp::jac_g(problem, z)?.entries {
                gr[c] -= v * eta[r];
            }
            Ok(gr)
        };
        let full = Triplets {
            entries: symmetric_entries(&hess),
            ..hess
        };
        out.push(compare("hess_lagrangian", &lagrangian_grad, &dense_rows(&full), x, threshold)?);
    }
    Ok(out)
}

/// Checks the gradient and Hessian of an interior-point objective.
pub fn check_inner_objective(
    name: &str,
    problem: &dyn InnerProblem,
    x: &[f64],
    threshold: f64,
) -> Result<Vec<CheckReport>, EvalError> {
    let grad = check_gradient(
        name,
        &|z| problem.objective(z).map(|e| (e.value, e.gradient)),
        x,
        threshold,
    )?;
    let hess = problem.hessian(x, &vec![0.0; problem.num_ineq()])?;
    let full = Triplets {
        entries: symmetric_entries(&hess),
        ..hess
    };
    let gradient = |z: &[f64]| problem.objective(z).map(|e| e.gradient);
    let hess_report = compare(&format!("{name}_hessian"), &gradient, &dense_rows(&full), x, threshold)?;
    Ok(vec![grad, hess_report])
}

fn symmetric_entries(lower: &Triplets) -> Vec<(usize, usize, f64)> {
    let mut e = lower.entries.clone();
    e.extend(lower.entries.iter().filter(|t| t.0 != t.1).map(|&(r, c, v)| (c, r, v)));
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let rep = check_gradient("f", &|x| Ok((-x[0], vec![-1.0, 0.0])), &[2.0, 1.0], 1e-6).unwrap();
        assert!(rep.pass);
        assert!(rep.max_rel_error <= 1e-12);
    }

    #[test]
    fn corrupted_component_is_located() {
        let fun = |x: &[f64]| Ok((x[0] * x[0] + 3.0 * x[1] * x[1], vec![2.0 * x[0], 6.0 * x[1] * 1.01]));
        let rep = check_gradient("f", &fun, &[0.7, -1.3], 1e-6).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.worst_entry.unwrap().col, 1);
    }

    #[test]
    fn zero_map_has_zero_error() {
        let fun = |_x: &[f64]| Ok((vec![0.0, 0.0], Triplets::new(2, 3)));
        let rep = check_jacobian("zero", &fun, &[1.0, 2.0, 3.0], 1e-6).unwrap();
        assert_eq!(rep.max_rel_error, 0.0);
    }
}
