//! Smooth radial cutoffs `chi_R(x) = chi(|x - c| / R)`.
//!
//! The profile equals 1 on `[0, 1]`, 0 on `[3/2, inf)`, and in between is the
//! normalised running integral of the bump `exp(-1 / (t (1 - t)))`, so it is
//! infinitely differentiable with exact plateaus.

use std::sync::OnceLock;

use crate::quadrature::integrate;

const GL_ORDER: usize = 24;

fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

fn bump_integral(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    integrate(bump, 0.0, s.min(1.0), GL_ORDER, 4)
}

fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| integrate(bump, 0.0, 1.0, GL_ORDER, 16))
}

/// The one-dimensional even profile.
pub fn profile(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        1.0
    } else if t >= 1.5 {
        0.0
    } else {
        let s = 2.0 * (t - 1.0);
        (1.0 - bump_integral(s) / bump_mass()).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    radius: f64,
    center: [f64; 2],
}

impl Cutoff {
    /// Panics if `radius` is not positive.
    pub fn new(radius: f64, center: [f64; 2]) -> Self {
        assert!(radius > 0.0, "cutoff radius must be positive");
        Cutoff { radius, center }
    }

    pub fn centered(radius: f64) -> Self {
        Self::new(radius, [0.0, 0.0])
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let r = (x[0] - self.center[0]).hypot(x[1] - self.center[1]);
        profile(r / self.radius)
    }
}
