//! Local dual contraction rates of the multiplier iteration.
//!
//! Near a limit point with fixed ρ the multiplier error evolves as
//! `e_{k+1} ≈ M̃ e_k` with
//!
//! ```text
//! M̃ = ρ/σ · (I − J̃ H̃⁻¹ J̃ᵀ / σ),   σ = ω + ρ,
//! ```
//!
//! where `H̃ = Nᵀ(∇²ₓₓL + JᵀJ/σ)N` and `J̃ = JN` are reduced onto the
//! nullspace `N` of the active inequality gradients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::RateError;
use crate::nlp::{self, NlpProblem};
use crate::outer::OuterHistory;

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;

/// Reduced curvature and constraint Jacobian at a limit point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    /// `H̃`, positive definite.
    pub h_tilde: DMatrix<f64>,
    /// `J̃`, m × (n − |A|).
    pub j_tilde: DMatrix<f64>,
}

impl ReducedModel {
    /// `I − J̃ H̃⁻¹ J̃ᵀ / σ`
    pub fn bracket(&self, sigma: f64) -> Result<DMatrix<f64>, RateError> {
        let m = self.j_tilde.nrows();
        let chol = self.h_tilde.clone().cholesky().ok_or(RateError::Degenerate)?;
        let hinv_jt = chol.solve(&self.j_tilde.transpose());
        Ok(DMatrix::identity(m, m) - &self.j_tilde * hinv_jt / sigma)
    }

    /// `M̃` for the given weights; the bracket uses the same (ω, ρ).
    pub fn contraction(&self, omega: f64, rho: f64) -> Result<DMatrix<f64>, RateError> {
        let sigma = omega + rho;
        Ok(self.bracket(sigma)? * (rho / sigma))
    }
}

/// A shared quadratic model with its bracket frozen at `sigma`, so that
/// only the leading factor ρ/(ω+ρ) depends on the weights.
#[derive(Debug, Clone)]
pub struct FrozenModel {
    bracket: DMatrix<f64>,
}

impl FrozenModel {
    pub fn new(model: &ReducedModel, sigma: f64) -> Result<Self, RateError> {
        Ok(Self {
            bracket: model.bracket(sigma)?,
        })
    }

    pub fn contraction(&self, omega: f64, rho: f64) -> DMatrix<f64> {
        &self.bracket * (rho / (omega + rho))
    }

    pub fn predicted_rate(&self, omega: f64, rho: f64) -> Result<f64, RateError> {
        spectral_norm(&self.contraction(omega, rho))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    #[serde(skip)]
    pub m_tilde: DMatrix<f64>,
    #[serde(skip)]
    pub model: ReducedModel,
    /// `‖M̃‖₂`
    pub predicted_rate: f64,
    pub active_set: Vec<usize>,
    pub strict_complementarity_ok: bool,
    /// ρ/(ρ+ω)
    pub ratio_predicted: f64,
}

impl RateReport {
    /// Contraction restricted to the invariant subspace the iteration
    /// actually visits from `direction`, typically an observed multiplier
    /// step. Directions that the updates never excite do not limit the rate.
    pub fn reachable_rate(&self, direction: &[f64]) -> Result<f64, RateError> {
        reachable_rate(&self.m_tilde, direction)
    }
}

/// Assembles `M̃` at `(x, λ, η)`; inequalities with `gᵢ ≤ act_tol` count as active.
pub fn contraction_matrix(
    problem: &dyn NlpProblem,
    x: &[f64],
    lambda: &[f64],
    eta: &[f64],
    omega: f64,
    rho: f64,
    act_tol: f64,
) -> Result<RateReport, RateError> {
    let d = problem.dims();
    let sigma = omega + rho;
    assert!(sigma > 0.0, "contraction needs ω + ρ > 0");

    let jc = nlp::jac_c(problem, x)?.to_dense();
    let zero_eta = vec![0.0; d.p];
    let mut h = nlp::hess_lagrangian(problem, x, lambda, &zero_eta)?
        .map(|t| t.sym_to_dense())
        .unwrap_or_else(|| DMatrix::zeros(d.n, d.n));
    h += jc.transpose() * &jc / sigma;

    let gx = nlp::g(problem, x)?;
    let active_set: Vec<usize> = (0..d.p).filter(|&i| gx[i] <= act_tol).collect();
    let strict_complementarity_ok = active_set.iter().all(|&i| eta[i] > act_tol);
    let jg = nlp::jac_g(problem, x)?.to_dense();
    let basis = if active_set.is_empty() {
        DMatrix::identity(d.n, d.n)
    } else {
        let rows: Vec<_> = active_set.iter().map(|&i| jg.row(i)).collect();
        nullspace(&DMatrix::from_rows(&rows))
    };

    let model = ReducedModel {
        h_tilde: basis.transpose() * &h * &basis,
        j_tilde: &jc * &basis,
    };
    let m_tilde = model.contraction(omega, rho)?;
    let predicted_rate = spectral_norm(&m_tilde)?;
    Ok(RateReport {
        m_tilde,
        model,
        predicted_rate,
        active_set,
        strict_complementarity_ok,
        ratio_predicted: rho / sigma,
    })
}

/// Orthonormal basis of `{v : A v = 0}` as columns.
fn nullspace(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let eig = SymmetricEigen::new(a.transpose() * a);
    let scale = eig.eigenvalues.iter().fold(0f64, |m, v| m.max(v.abs())).max(1.0);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() <= 1e-12 * scale)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Largest singular value by power iteration on `MᵀM`.
///
/// Two deterministic starts are used, the normalized all-ones vector and a
/// graded one, since symmetric problems often make the all-ones vector an
/// exact non-dominant eigenvector.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64, RateError> {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return Ok(0.0);
    }
    let gram = m.transpose() * m;
    let ones = DVector::from_element(n, 1.0);
    let graded = DVector::from_fn(n, |i, _| 1.0 / (i as f64 + 1.0) + 0.1 * (i % 3) as f64);
    let a = dominant_eigenvalue(&gram, ones)?;
    let b = dominant_eigenvalue(&gram, graded)?;
    Ok(a.max(b).max(0.0).sqrt())
}

fn dominant_eigenvalue(sym: &DMatrix<f64>, start: DVector<f64>) -> Result<f64, RateError> {
    let mut v = start.normalize();
    for _ in 0..POWER_MAX_ITERS {
        let w = sym * &v;
        let theta = v.dot(&w);
        let resid = (&w - &v * theta).norm();
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        if resid <= POWER_TOL * theta.abs() {
            return Ok(theta);
        }
        v = w / wn;
    }
    Err(RateError::NoConvergence {
        iterations: POWER_MAX_ITERS,
    })
}

/// Spectral norm of `M` restricted to the Krylov space of `direction`.
pub fn reachable_rate(m: &DMatrix<f64>, direction: &[f64]) -> Result<f64, RateError> {
    let n = m.nrows();
    assert_eq!(direction.len(), n, "direction has wrong length");
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut v = DVector::from_column_slice(direction);
    if v.norm() == 0.0 {
        return Ok(0.0);
    }
    for _ in 0..n {
        let before = v.norm();
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        // Second pass for orthogonality in floating point.
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let norm = v.norm();
        if norm == 0.0 || norm <= 1e-10 * before {
            break;
        }
        let q = v / norm;
        v = m * &q;
        basis.push(q);
    }
    let q = DMatrix::from_columns(&basis);
    spectral_norm(&(q.transpose() * m * &q))
}

/// Geometric mean of the last `tail` ratios of consecutive multiplier step
/// norms, using only the steps before the first one at or below
/// 100 machine epsilons.
pub fn empirical_rate(history: &OuterHistory, tail: usize) -> Result<f64, RateError> {
    let steps = usable_steps(history);
    empirical_rate_from_steps(&steps, tail)
}

/// The multiplier step norms `‖λ_k − λ_{k−1}‖` for `k ≥ 2` until the first
/// negligible one.
pub fn usable_steps(history: &OuterHistory) -> Vec<f64> {
    history
        .records
        .iter()
        .skip(1)
        .map(|r| r.lambda_step_norm)
        .take_while(|&s| s > 100.0 * f64::EPSILON)
        .collect()
}

pub fn empirical_rate_from_steps(steps: &[f64], tail: usize) -> Result<f64, RateError> {
    assert!(tail > 0, "tail must be positive");
    if steps.len() < tail + 1 {
        return Err(RateError::InsufficientHistory {
            usable: steps.len(),
            needed: tail + 1,
        });
    }
    let window = &steps[steps.len() - tail - 1..];
    let log_sum: f64 = window.windows(2).map(|w| (w[1] / w[0]).ln()).sum();
    Ok((log_sum / tail as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_model_rates() {
        let model = ReducedModel {
            h_tilde: DMatrix::from_element(1, 1, 1.0),
            j_tilde: DMatrix::from_element(1, 1, 1.0),
        };
        let alm = model.contraction(0.0, 1.0).unwrap();
        assert!(alm[(0, 0)].abs() < 1e-15);
        let malm = model.contraction(0.1, 1.0).unwrap();
        let expect = (1.0 / 1.1) * (0.1 / 1.1);
        assert!((malm[(0, 0)] - expect).abs() < 1e-15);
    }

    #[test]
    fn spectral_norm_of_simple_matrices() {
        assert!((spectral_norm(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.2]));
        assert!((spectral_norm(&d).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_finds_direction_orthogonal_to_ones() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!((spectral_norm(&m).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn geometric_steps_have_exact_rate() {
        let steps: Vec<f64> = (0..10).map(|k| 0.5f64.powi(k)).collect();
        let r = empirical_rate_from_steps(&steps, 5).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert!(matches!(
            empirical_rate_from_steps(&steps[..4], 5),
            Err(RateError::InsufficientHistory { usable: 4, needed: 6 })
        ));
    }

    #[test]
    fn krylov_restriction_skips_unexcited_directions() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.1]));
        assert!((reachable_rate(&m, &[0.0, 1.0]).unwrap() - 0.1).abs() < 1e-12);
        assert!((reachable_rate(&m, &[1.0, 1.0]).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn nullspace_is_orthonormal_and_annihilated() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 2.0]);
        let n = nullspace(&a);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).norm() < 1e-12);
        assert!((n.transpose() * &n - DMatrix::identity(2, 2)).norm() < 1e-12);
    }
}
