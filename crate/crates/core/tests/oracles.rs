//! Checks against independently computed reference values.

use std::f64::consts::PI;
use std::sync::Arc;

use disint::density::{normalize_on_fiber, ProfileVariant};
use disint::fiber::{trace_fiber, TraceOptions};
use disint::modes::{solve, ModeProblem, ModeVariant};
use disint::{AmbientDensity, ObservationOperator};
use nalgebra::DVector;
use proptest::prelude::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// Density of `X1^2 + 4 X2^2` for independent standard normals at `y`,
/// from the convolution of the two scaled chi-square densities after the
/// substitution `t = y sin^2(phi)`:
/// `(1 / 2pi) int_0^{pi/2} exp(-y sin^2(phi)/2 - y cos^2(phi)/8) dphi`.
fn ellipse_observation_density(y: f64) -> f64 {
    let n = 4000;
    let h = 0.5 * PI / n as f64;
    let f = |phi: f64| (-y * phi.sin().powi(2) / 2.0 - y * phi.cos().powi(2) / 8.0).exp();
    // Composite Simpson.
    let mut sum = f(0.0) + f(0.5 * PI);
    for k in 1..n {
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    sum * h / 3.0 / (2.0 * PI)
}

fn ellipse_trace(y: f64, step: f64) -> (ObservationOperator, Arc<disint::FiberTrace>) {
    let ell = ObservationOperator::ellipse(1.0, 0.5).unwrap();
    let opts = TraceOptions::default().with_step(step);
    let trace = trace_fiber(&ell, &v(&[y]), &v(&[y.sqrt(), 0.0]), &opts, None).unwrap();
    (ell, Arc::new(trace))
}

#[test]
fn disintegration_normalizer_is_the_observation_density() {
    // Coarea formula: the fiber integral of p / |grad h| is the density of h(X).
    let g = AmbientDensity::standard_gaussian(2);
    for y in [0.25, 1.01, 4.0] {
        let (ell, trace) = ellipse_trace(y, 1e-3);
        let profile = normalize_on_fiber(&g, &ell, &trace, ProfileVariant::Disintegration).unwrap();
        let oracle = ellipse_observation_density(y);
        let rel = (profile.log_norm_const.exp() - oracle).abs() / oracle;
        assert!(rel < 1e-6, "y={y}: {} vs {oracle}", profile.log_norm_const.exp());
    }
}

#[test]
fn observation_density_oracle_integrates_to_one() {
    // Sanity check of the oracle itself on a wide grid.
    let (n, top) = (40_000, 200.0);
    let h = top / n as f64;
    // Integrable 1/sqrt singularity is absent: the density is finite at 0 (= 1/4).
    let total: f64 = (0..n).map(|k| ellipse_observation_density((k as f64 + 0.5) * h) * h).sum::<f64>();
    assert!((total - 1.0).abs() < 1e-4, "{total}");
    assert!((ellipse_observation_density(0.0) - 0.25).abs() < 1e-12);
}

#[test]
fn restricted_and_disintegration_modes_match_closed_forms() {
    // On the fiber parameterized by x = (sqrt(y) cos t, sqrt(y)/2 sin t):
    // restricted log density is -y(1 - 0.75 sin^2 t)/2, maximal at the minor poles;
    // the disintegration adds -log(2 sqrt(y) sqrt(1 + 3 sin^2 t)), which wins at the major poles.
    let y = 1.01;
    let g = AmbientDensity::standard_gaussian(2);
    let ell = ObservationOperator::ellipse(1.0, 0.5).unwrap();
    let dis = solve(&ModeProblem::new(g.clone(), ell.clone(), v(&[y]), ModeVariant::Disintegration)).unwrap();
    let res = solve(&ModeProblem::new(g, ell, v(&[y]), ModeVariant::Restricted)).unwrap();
    let expect_dis = 0.5 * y + (2.0 * PI).ln() + (2.0 * y.sqrt()).ln();
    let expect_res = 0.5 * y * 0.25 + (2.0 * PI).ln();
    for m in &dis.minimizers {
        assert!((m.objective - expect_dis).abs() < 1e-9);
    }
    for m in &res.minimizers {
        assert!((m.objective - expect_res).abs() < 1e-9);
    }
}

#[test]
fn trace_length_converges_to_perimeter() {
    // Ramanujan's second approximation is accurate to ~1e-10 for this eccentricity.
    let (a, b) = (1.01f64.sqrt(), 0.5 * 1.01f64.sqrt());
    let hh = ((a - b) / (a + b)).powi(2);
    let ramanujan = PI * (a + b) * (1.0 + 3.0 * hh / (10.0 + (4.0 - 3.0 * hh).sqrt()));
    let (_, trace) = ellipse_trace(1.01, 1e-3);
    assert!((trace.total_length() - ramanujan).abs() < 1e-5, "{} vs {ramanujan}", trace.total_length());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn profiles_integrate_to_one(y in 0.2f64..5.0, a in 0.5f64..2.0, b in 0.3f64..1.5) {
        let op = ObservationOperator::ellipse(a, b).unwrap();
        let g = AmbientDensity::standard_gaussian(2);
        let opts = TraceOptions::default().with_step(5e-3);
        let trace = Arc::new(trace_fiber(&op, &v(&[y]), &v(&[a * y.sqrt(), 0.0]), &opts, None).unwrap());
        for variant in [ProfileVariant::Restricted, ProfileVariant::Disintegration] {
            let p = normalize_on_fiber(&g, &op, &trace, variant).unwrap();
            prop_assert!((p.integral() - 1.0).abs() < 1e-12);
            prop_assert!(p.normalized.iter().all(|d| *d > 0.0 && d.is_finite()));
        }
    }

    #[test]
    fn disintegration_is_density_over_gradient_norm(x1 in -3.0f64..3.0, x2 in -3.0f64..3.0) {
        prop_assume!(x1.abs() + x2.abs() > 1e-3);
        let op = ObservationOperator::ellipse(1.0, 0.5).unwrap();
        let g = AmbientDensity::standard_gaussian(2);
        let x = v(&[x1, x2]);
        let grad_norm = (4.0 * x1 * x1 + 64.0 * x2 * x2).sqrt();
        let expected = g.log_density(&x) - grad_norm.ln();
        let got = disint::density::log_disint_unnorm(&g, &op, &x).unwrap();
        prop_assert!((got - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }
}
