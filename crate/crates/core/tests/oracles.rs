//! Derived values on R1 checked against independent computations.

use std::sync::OnceLock;

use fanlab::build::Build;
use fanlab::hypercyclic::{b_identity_constant, calibrate_gamma, fan_residual_norm, CALIBRATION_MARGIN};
use fanlab::negligibility::{porosity_witness, small_ball_bound, GaussianSampler};
use fanlab::profiles;
use fanlab::schedule::ScalarField;
use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

fn r1() -> &'static Build<f64> {
    static B: OnceLock<Build<f64>> = OnceLock::new();
    B.get_or_init(|| Build::new(profiles::load("thm1").unwrap().0).unwrap())
}

#[test]
fn frame_constant_matches_plain_dense_svd() {
    let b = r1();
    let nu = b.schedule.stage(1).nu;
    let m = DMatrix::from_fn(nu + 1, nu + 1, |i, j| b.basis.f_in_e.get(i, j));
    let oracle = m.singular_values().max();
    let cal = calibrate_gamma(&b.schedule, 1).unwrap();
    assert!((cal.frame_constant - oracle).abs() <= 1e-10 * oracle, "{} vs {oracle}", cal.frame_constant);
    assert!((cal.gamma - 0.25 / oracle * CALIBRATION_MARGIN).abs() <= 1e-15);
}

#[test]
fn fan_residual_is_gamma_times_frame_constant() {
    // (T^c - p(T)) pi_nu f_j = gamma * e_j-part of f_j shifted into the fan.
    let b = r1();
    let cal = calibrate_gamma(&b.schedule, 1).unwrap();
    for k in 1..=2 {
        let v = fan_residual_norm(b, 1, k).unwrap().value;
        assert!((v - b.schedule.stage(1).gamma * cal.frame_constant).abs() <= 1e-12, "k = {k}: {v}");
    }
}

#[test]
fn b_identity_constant_from_layoff_weights() {
    let b = r1();
    let st = b.schedule.stage(1);
    let lam = |j: usize| b.basis.layout.layoff_weight(j).unwrap();
    let (bb, xi) = (st.b as f64, st.xi);
    let oracle = 1.0 + bb * ((1.0 / (bb * lam(st.b + xi + 1))).powi(2) + (1.0 / lam(xi + 1)).powi(2)).sqrt();
    assert_eq!(lam(xi + 1), 16.0);
    assert!((b_identity_constant(b, 1).unwrap() - oracle).abs() <= 1e-12);
}

#[test]
fn fan_start_functional_value_is_minus_inverse_gamma() {
    let b = r1();
    let st = b.schedule.stage(1);
    let w = porosity_witness(b, &[], 1, 0.5, 1.0, 4, 1).unwrap();
    assert!((w.value_at_fan_start.re + 1.0 / st.gamma).abs() <= 1e-9 / st.gamma);
    assert_eq!(w.value_at_fan_start.im, 0.0);
}

#[test]
fn small_ball_bounds_dominate_exact_probabilities() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    for c0 in [0.5, 1.0, 3.0] {
        for t in [1e-3, 0.1, 0.5, 2.0] {
            let real = 2.0 * normal.cdf(t / c0) - 1.0;
            assert!(real <= small_ball_bound(t, c0, ScalarField::Real));
            let complex = 1.0 - (-(t * t) / (2.0 * c0 * c0)).exp();
            assert!(complex <= small_ball_bound(t, c0, ScalarField::Complex) + 1e-16);
        }
    }
}

#[test]
fn sampler_matches_normal_cdf() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let s = GaussianSampler::<f64>::new(vec![2.0], ScalarField::Real, 42).unwrap();
    let draws = s.sample_functional(&[(0, 1.0)], &[], 200_000);
    for t in [0.5, 1.0, 2.0, 4.0] {
        let p = draws.iter().filter(|v| v.abs() <= t).count() as f64 / draws.len() as f64;
        let exact = 2.0 * normal.cdf(t / 2.0) - 1.0;
        let se = (exact * (1.0 - exact) / draws.len() as f64).sqrt();
        assert!((p - exact).abs() <= 4.0 * se, "t = {t}: {p} vs {exact}");
    }
}
