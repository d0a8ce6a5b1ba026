use std::sync::Arc;

use gl_lab::field::{ComplexField, EdgeField};
use gl_lab::gl::{GLParams, GLState};
use gl_lab::grid::Grid2D;
use gl_lab::measure::{self, BulkSpec, ScalingPoint};
use num_complex::Complex64;

fn radial_state(n: usize) -> GLState {
    let g = Arc::new(Grid2D::disk(1.0, n).unwrap());
    let psi = ComplexField::from_fn(g.clone(), |x| Complex64::new(x[0], x[1]));
    GLState::new(psi, EdgeField::zeros(g), GLParams::from_b(10.0, 1.2).unwrap()).unwrap()
}

#[test]
fn sup_norms_of_the_identity_map() {
    // |psi(x)| = |x| on the unit disk: the bulk maximum sits on the circle
    // of radius 1 - delta and the boundary maximum on the outermost nodes.
    let s = radial_state(129);
    let h = s.grid().h();
    let bulk = measure::bulk_sup_norm(&s, &BulkSpec::fixed(0.25)).unwrap();
    assert!(bulk <= 0.75 + 1e-12 && bulk > 0.75 - 2.0 * h, "{bulk}");
    let outermost = (0..s.grid().n_nodes())
        .filter(|&k| s.grid().is_active(k))
        .map(|k| s.psi.values()[k].norm())
        .fold(0.0, f64::max);
    assert_eq!(measure::boundary_sup_norm(&s, 0.1).unwrap(), outermost);
    assert!((outermost - 1.0).abs() < 2.0 * h);
}

#[test]
fn ball_average_of_a_quartic() {
    // Mean of |x|^4 over the disk of radius rho is rho^4 / 3.
    let s = radial_state(257);
    let rho = 0.5;
    let got = measure::ball_l4_average(&s.psi, [0.0, 0.0], rho).unwrap();
    let want = rho.powi(4) / 3.0;
    assert!((got - want).abs() < 0.02 * want, "{got} vs {want}");
    // Off-centre the mean of |c + y|^4 over |y| < rho is
    // |c|^4 + 2 |c|^2 rho^2 + rho^4 / 3.
    let c = [0.2, -0.1];
    let rho = 0.3;
    let c2: f64 = c[0] * c[0] + c[1] * c[1];
    let want = c2 * c2 + 2.0 * c2 * rho * rho + rho.powi(4) / 3.0;
    let got = measure::ball_l4_average(&s.psi, c, rho).unwrap();
    assert!((got - want).abs() < 0.02 * want, "{got} vs {want}");
}

#[test]
fn scaling_fit_recovers_a_power_law() {
    let pts: Vec<ScalingPoint> = [1.05, 1.1, 1.2, 1.3, 1.5]
        .iter()
        .map(|&b: &f64| ScalingPoint { b, value: 1.7 * (b - 1.0).powf(0.45), converged: true })
        .chain([ScalingPoint { b: 1.4, value: 9.0, converged: false }])
        .collect();
    let fit = measure::fit_scaling(&pts).unwrap();
    assert!((fit.slope - 0.45).abs() < 1e-12);
    assert!((fit.intercept - 1.7f64.ln()).abs() < 1e-12);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
    assert_eq!(fit.excluded, 1);
    // value / sqrt(b - 1) = 1.7 (b - 1)^(-0.05) peaks at the smallest b.
    assert!((fit.c_max - 1.7 * 0.05f64.powf(-0.05)).abs() < 1e-12);
}
