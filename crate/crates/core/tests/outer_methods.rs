use qpp_core::inner::InnerOptions;
use qpp_core::nlp::{first_order_multiplier, lift, NlpProblem};
use qpp_core::outer::{alm, kkt_residuals, malm, qpm_continuation, qpm_direct, OuterOptions, OuterStatus};
use qpp_core::problems::{make_circle, CircleParams, CIRCLE_X0, X_B};
use qpp_core::{ConfigError, PenaltyWeight};

fn circle(eps: f64) -> impl NlpProblem {
    make_circle(CircleParams { epsilon: eps })
}

fn w(v: f64) -> PenaltyWeight {
    PenaltyWeight::new(v).unwrap()
}

#[test]
fn alm_is_malm_without_penalty() {
    let p = circle(0.0);
    let (o, i) = (OuterOptions::default(), InnerOptions::default());
    let a = alm(&p, &CIRCLE_X0, &[0.0; 2], &o, &i).unwrap();
    let m = malm(&p, PenaltyWeight::ZERO, &CIRCLE_X0, &[0.0; 2], &o, &i).unwrap();
    assert_eq!(a.status, m.status);
    assert_eq!(a.records, m.records);
}

#[test]
fn multiplier_update_is_first_order_estimate() {
    let p = circle(1e-2);
    let omega = 1e-2;
    let hist = malm(&p, w(omega), &CIRCLE_X0, &[0.0; 2], &OuterOptions::default(), &InnerOptions::default()).unwrap();
    assert!(hist.converged());
    let mut prev = vec![0.0; 2];
    for r in &hist.records {
        let cx = p.eval_c(&r.x).unwrap();
        let expect = first_order_multiplier(&cx, &prev, omega, r.rho);
        for (a, b) in r.lambda.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
        prev = r.lambda.clone();
    }
}

#[test]
fn rho_decreases_geometrically_to_floor() {
    let p = circle(1e-4);
    let opts = OuterOptions {
        k_max: 20,
        rho_floor: 1e-6,
        ..OuterOptions::default()
    };
    let hist = malm(&p, w(1e-4), &CIRCLE_X0, &[0.0; 2], &opts, &InnerOptions::default()).unwrap();
    let rhos: Vec<f64> = hist.records.iter().map(|r| r.rho).collect();
    assert!((rhos[0] - 0.1).abs() < 1e-15);
    for pair in rhos.windows(2) {
        assert!(pair[1] <= pair[0]);
        assert!(pair[1] >= 1e-6);
    }
}

#[test]
fn fixed_rho_is_held() {
    let p = circle(0.0);
    let opts = OuterOptions {
        fixed_rho: Some(1.0),
        k_max: 30,
        ..OuterOptions::default()
    };
    let hist = malm(&p, w(0.1), &CIRCLE_X0, &[0.0; 2], &opts, &InnerOptions::default()).unwrap();
    assert!(hist.records.iter().all(|r| r.rho == 1.0));
}

#[test]
fn kkt_point_is_a_fixed_point() {
    // At x_B the active wedge constraint has η = 1/2 and the circle
    // multipliers sum to −1/4.
    let p = circle(0.0);
    let hist = alm(&p, &X_B, &[-0.125, -0.125], &OuterOptions::default(), &InnerOptions::default()).unwrap();
    assert_eq!(hist.status, OuterStatus::Converged);
    assert_eq!(hist.outer_iters(), 1);
    let r = hist.last().unwrap();
    assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
    assert!((r.eta[1] - 0.5).abs() < 1e-8);
    assert!((r.lambda[0] + r.lambda[1] + 0.25).abs() < 1e-8);
}

#[test]
fn converged_solves_carry_kkt_certificate() {
    let inner = InnerOptions::default();
    for &(eps, omega) in &[(0.0, 1e-1), (0.0, 1e-2), (1e-2, 1e-2), (1e-2, 1e-4), (0.0, 0.0)] {
        let p = circle(eps);
        let hist = malm(&p, w(omega), &CIRCLE_X0, &[0.0; 2], &OuterOptions::default(), &inner).unwrap();
        assert!(hist.converged(), "eps={eps} omega={omega}: {:?}", hist.status);
        let r = hist.last().unwrap();
        let k = kkt_residuals(&p, omega, &r.x, &r.lambda, &r.eta).unwrap();
        assert!(k.stationarity <= 10.0 * inner.kkt_tol, "{k:?}");
        assert!(k.feasibility <= 1e-8);
        assert!(k.min_eta >= 0.0);
        assert!(k.complementarity <= 10.0 * inner.kkt_tol, "{k:?}");
    }
}

#[test]
fn lifted_instance_generates_same_iterates() {
    let omega = 1e-2;
    let rho0 = OuterOptions::default().rho0;
    let p = circle(1e-2);
    let lifted = lift(&p, w(omega));
    let l0 = [0.0; 2];
    let xh0 = lifted.start(&CIRCLE_X0, &l0, rho0).unwrap();
    let (o, i) = (OuterOptions::default(), InnerOptions::default());
    let base = malm(&p, w(omega), &CIRCLE_X0, &l0, &o, &i).unwrap();
    let aux = alm(&lifted, &xh0, &l0, &o, &i).unwrap();
    assert!(base.converged() && aux.converged());
    assert_eq!(base.outer_iters(), aux.outer_iters());
    for (a, b) in base.records.iter().zip(&aux.records) {
        for j in 0..2 {
            assert!((a.x[j] - b.x[j]).abs() <= 1e-8, "k={} x", a.k);
            assert!((a.lambda[j] - b.lambda[j]).abs() <= 1e-8, "k={} lambda", a.k);
        }
    }
}

#[test]
fn penalty_solves_agree_with_malm() {
    let p = circle(0.0);
    let inner = InnerOptions::default();
    for &omega in &[1e-1, 1e-2, 1e-4] {
        let m = malm(&p, w(omega), &CIRCLE_X0, &[0.0; 2], &OuterOptions::default(), &inner).unwrap();
        let q = qpm_direct(&p, w(omega), &CIRCLE_X0, &inner).unwrap();
        let c = qpm_continuation(&p, w(omega), &CIRCLE_X0, &OuterOptions::default(), &inner).unwrap();
        assert!(m.converged() && q.converged() && c.converged());
        for other in [q.x_final().unwrap(), c.x_final().unwrap()] {
            let d: f64 = m.x_final().unwrap().iter().zip(other).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d <= 1e-6, "omega={omega} distance {d}");
        }
    }
}

#[test]
fn continuation_ends_at_target_weight() {
    let p = circle(0.0);
    let hist = qpm_continuation(&p, w(1e-3), &CIRCLE_X0, &OuterOptions::default(), &InnerOptions::default()).unwrap();
    assert!(hist.converged());
    let rhos: Vec<f64> = hist.records.iter().map(|r| r.rho).collect();
    assert_eq!(rhos.len(), 3);
    assert!((rhos[2] - 1e-3).abs() < 1e-15);
}

#[test]
fn invalid_configurations_are_rejected() {
    let p = circle(0.0);
    let inner = InnerOptions::default();
    let no_floor = OuterOptions {
        rho_floor: 0.0,
        ..OuterOptions::default()
    };
    assert!(matches!(
        qpm_continuation(&p, PenaltyWeight::ZERO, &CIRCLE_X0, &no_floor, &inner),
        Err(ConfigError::InvalidOption { .. })
    ));
    assert!(qpm_direct(&p, PenaltyWeight::ZERO, &CIRCLE_X0, &inner).is_err());
    let bad = OuterOptions {
        c_rho: 1.5,
        ..OuterOptions::default()
    };
    assert!(malm(&p, w(0.1), &CIRCLE_X0, &[0.0; 2], &bad, &inner).is_err());
    assert!(matches!(
        malm(&p, w(0.1), &[1.0], &[0.0; 2], &OuterOptions::default(), &inner),
        Err(ConfigError::Dimension { .. })
    ));
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let p = circle(1e-4);
    let opts = OuterOptions {
        k_max: 3,
        ..OuterOptions::default()
    };
    let hist = malm(&p, w(1e-6), &CIRCLE_X0, &[0.0; 2], &opts, &InnerOptions::default()).unwrap();
    assert_eq!(hist.status, OuterStatus::MaxOuterIterations);
    assert_eq!(hist.outer_iters(), 3);
}
