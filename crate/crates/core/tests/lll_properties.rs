use std::f64::consts::PI;

use gl_lab::field::{ComplexField, Norm};
use gl_lab::lll::{self, kernel, plane_grid, LLLProjector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sup_norm_bound_is_the_kernel_mass() {
    // A unimodular input aligned with the kernel row at the origin attains
    // |P f (0)| = int |P(0, y)| dy = 2.
    let g = plane_grid(14.0, 0.1).unwrap();
    let p = LLLProjector::new(g.clone()).unwrap();
    let aligned = ComplexField::from_fn(g.clone(), |y| {
        let k = kernel([0.0, 0.0], y);
        if k.norm() > 0.0 { k.conj() / k.norm() } else { Complex64::new(1.0, 0.0) }
    });
    let centre = g.node_index(g.nx() / 2, g.ny() / 2);
    let peak = p.apply(&aligned).unwrap().values()[centre].norm();
    assert!((peak - 2.0).abs() < 1e-6, "{peak}");

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let f = ComplexField::from_fn(g.clone(), |_| Complex64::from_polar(1.0, rng.gen_range(-PI..PI)));
        let ratio = p.apply(&f).unwrap().sup_norm();
        assert!(ratio <= 2.0 + 1e-9, "{ratio}");
    }
}

#[test]
fn idempotency_holds_at_every_resolution() {
    let mut errors = Vec::new();
    for h in [0.5, 0.25, 0.1] {
        let g = plane_grid(16.0, h).unwrap();
        let p = LLLProjector::new(g.clone()).unwrap();
        let worst = (0..3)
            .map(|seed| p.idempotency_error(&lll::wave_packets(&g, seed, 3.0)).unwrap())
            .fold(0.0, f64::max);
        errors.push(worst);
    }
    assert!(errors.iter().all(|&e| e <= 1e-12), "{errors:?}");
}

#[test]
fn lowest_level_states_have_small_defect() {
    let g = plane_grid(12.0, 0.05).unwrap();
    let p = LLLProjector::new(g.clone()).unwrap();
    let f = ComplexField::from_fn(g.clone(), lll::lll_basis(1));
    let scale = f.sup_norm();
    let defect = p.lll_defect(&f).unwrap() / scale;
    // A second-band state is an eigenfunction with eigenvalue 3, so its
    // defect is set by what the projector leaks, not by the eigenvalue.
    let z = ComplexField::from_fn(g.clone(), |x| {
        Complex64::new(x[0], x[1]) * (-0.25 * (x[0] * x[0] + x[1] * x[1])).exp()
    });
    let leak = p.apply(&z).unwrap().norm(Norm::L2) / z.norm(Norm::L2);
    assert!(defect < 1e-2, "{defect}");
    assert!(leak < 1e-6, "{leak}");
}
