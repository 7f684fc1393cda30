mod support;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qpp_core::inner::{minimize, minimize_from, InnerOptions, InnerProblem, InnerStatus, ObjectiveEval};
use qpp_core::linalg::Triplets;
use qpp_core::EvalError;
use support::qp::{active_set_oracle, Qp};

fn random_qp() -> impl Strategy<Value = Qp> {
    (1usize..=4, 0usize..=6).prop_flat_map(|(n, p)| {
        (
            prop::collection::vec(-1.0..1.0f64, n * n),
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-1.0..1.0f64, p * n),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(0.0..1.0f64, p),
        )
            .prop_map(move |(m, g, a, xf, gap)| Qp::from_parts(n, p, &m, g, &a, xf, gap))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn matches_active_set_enumeration(qp in random_qp()) {
        let n = qp.dim();
        let res = minimize(&qp, &vec![0.0; n], &InnerOptions::default());
        prop_assert!(res.status.is_success(), "status {:?}", res.status);
        let (x_ref, _) = active_set_oracle(&qp);
        for i in 0..n {
            prop_assert!((res.x_star[i] - x_ref[i]).abs() <= 1e-7,
                "x[{}] = {} vs {}", i, res.x_star[i], x_ref[i]);
        }
    }

    #[test]
    fn iterates_stay_interior_with_monotone_barrier(qp in random_qp()) {
        let n = qp.dim();
        let mut mus = Vec::new();
        let mut interior = true;
        minimize_from(&qp, &vec![0.0; n], None, &InnerOptions::default(), &mut |t| {
            mus.push(t.mu);
            if qp.num_ineq() > 0 {
                interior &= t.min_slack > 0.0 && t.min_eta > 0.0;
            }
        });
        prop_assert!(interior);
        prop_assert!(mus.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn single_bound_is_active() {
    let qp = Qp {
        h: DMatrix::identity(1, 1),
        g: DVector::zeros(1),
        a: DMatrix::identity(1, 1),
        b: DVector::from_element(1, 1.0),
    };
    let res = minimize(&qp, &[3.0], &InnerOptions::default());
    assert_eq!(res.status, InnerStatus::Converged);
    assert!((res.x_star[0] - 1.0).abs() < 1e-9);
    assert!((res.eta[0] - 1.0).abs() < 1e-8);
}

/// `min −x₁` on the box `|xᵢ| ≤ 1` plus a small `x₂²` term pinning the
/// free coordinate at 0.
#[test]
fn box_face_multipliers() {
    let mut a = DMatrix::zeros(4, 2);
    a[(0, 0)] = -1.0;
    a[(1, 1)] = -1.0;
    a[(2, 0)] = 1.0;
    a[(3, 1)] = 1.0;
    let mut h = DMatrix::zeros(2, 2);
    h[(1, 1)] = 1e-3;
    h[(0, 0)] = 0.0;
    let qp = Qp {
        h,
        g: DVector::from_vec(vec![-1.0, 0.0]),
        a,
        b: DVector::from_element(4, -1.0),
    };
    let res = minimize(&qp, &[0.0, 0.0], &InnerOptions::default());
    assert!(res.status.is_success(), "{:?}", res.status);
    assert!((res.x_star[0] - 1.0).abs() < 1e-9);
    assert!(res.x_star[1].abs() < 1e-8);
    let expected_eta = [1.0, 0.0, 0.0, 0.0];
    for (e, x) in res.eta.iter().zip(expected_eta) {
        assert!((e - x).abs() < 1e-8, "eta {:?}", res.eta);
    }
}

#[test]
fn unconstrained_reduces_to_newton() {
    let qp = Qp {
        h: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        g: DVector::from_vec(vec![1.0, -1.0]),
        a: DMatrix::zeros(0, 2),
        b: DVector::zeros(0),
    };
    let res = minimize(&qp, &[5.0, -5.0], &InnerOptions::default());
    assert_eq!(res.status, InnerStatus::Converged);
    let x_ref = qp.h.clone().lu().solve(&(-&qp.g)).unwrap();
    assert!((res.x_star[0] - x_ref[0]).abs() < 1e-12);
    assert!((res.x_star[1] - x_ref[1]).abs() < 1e-12);
    assert!(res.newton_iters <= 2);
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let qp = Qp {
        h: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]),
        g: DVector::from_vec(vec![-2.0, 1.0]),
        a: DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.5, 0.0, -1.0]),
        b: DVector::from_vec(vec![0.5, -1.0, -0.2]),
    };
    let a = minimize(&qp, &[0.0, 0.0], &InnerOptions::default());
    let b = minimize(&qp, &[0.0, 0.0], &InnerOptions::default());
    assert_eq!(a, b);
}

#[test]
fn iteration_cap_is_reported() {
    let qp = Qp {
        h: DMatrix::identity(1, 1),
        g: DVector::zeros(1),
        a: DMatrix::identity(1, 1),
        b: DVector::from_element(1, 1.0),
    };
    let opts = InnerOptions {
        max_newton: 1,
        ..InnerOptions::default()
    };
    let res = minimize(&qp, &[3.0], &opts);
    assert_eq!(res.status, InnerStatus::IterationLimit);
    assert_eq!(res.newton_iters, 1);
}

#[test]
fn non_finite_objective_aborts() {
    struct Bad;
    impl InnerProblem for Bad {
        fn dim(&self) -> usize {
            1
        }
        fn num_ineq(&self) -> usize {
            0
        }
        fn objective(&self, _x: &[f64]) -> Result<ObjectiveEval, EvalError> {
            Err(EvalError::NonFinite { function: "f", index: 0 })
        }
        fn hessian(&self, _x: &[f64], _eta: &[f64]) -> Result<Triplets, EvalError> {
            Ok(Triplets::new(1, 1))
        }
        fn ineq(&self, _x: &[f64]) -> Result<Vec<f64>, EvalError> {
            Ok(vec![])
        }
        fn ineq_jacobian(&self, _x: &[f64]) -> Result<Triplets, EvalError> {
            Ok(Triplets::new(0, 1))
        }
    }
    let res = minimize(&Bad, &[0.0], &InnerOptions::default());
    assert!(matches!(res.status, InnerStatus::EvaluationError(EvalError::NonFinite { index: 0, .. })));
}
