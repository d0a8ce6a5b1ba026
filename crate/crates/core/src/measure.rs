//! Observables of converged states: sup norms over the bulk and along the
//! boundary, ball averages of `|psi|^4`, blow-up rescaling and power-law fits.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, EdgeField};
use crate::gl::{self, GLState};
use crate::grid::{Grid2D, NodeKind};

/// How far the bulk region keeps from the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum Margin {
    /// `dist(x, boundary) >= delta`.
    FixedDelta { delta: f64 },
    /// `dist(x, boundary) >= g1 / kappa`.
    KappaScaled { g1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BulkSpec {
    pub margin: Margin,
}

impl BulkSpec {
    pub fn fixed(delta: f64) -> Self {
        BulkSpec { margin: Margin::FixedDelta { delta } }
    }

    pub fn kappa_scaled(g1: f64) -> Self {
        BulkSpec { margin: Margin::KappaScaled { g1 } }
    }

    pub fn distance(&self, kappa: f64) -> f64 {
        match self.margin {
            Margin::FixedDelta { delta } => delta,
            Margin::KappaScaled { g1 } => g1 / kappa,
        }
    }

    /// Interior nodes at least the margin away from the boundary.
    pub fn nodes(&self, grid: &Grid2D, kappa: f64) -> Result<Vec<usize>> {
        let d = self.distance(kappa);
        let nodes: Vec<usize> = (0..grid.n_nodes())
            .filter(|&k| grid.node_kind(k) == NodeKind::Interior && grid.boundary_distance()[k] >= d)
            .collect();
        if nodes.is_empty() {
            let what = match self.margin {
                Margin::FixedDelta { delta } => format!("fixed margin delta = {delta}"),
                Margin::KappaScaled { g1 } => format!("margin g1/kappa = {g1}/{kappa}"),
            };
            return Err(Error::EmptyRegion(format!("no bulk nodes for {what}")));
        }
        Ok(nodes)
    }
}

/// `max |psi|` over the bulk region.
pub fn bulk_sup_norm(state: &GLState, spec: &BulkSpec) -> Result<f64> {
    let nodes = spec.nodes(state.grid(), state.params.kappa)?;
    let v = state.psi.values();
    Ok(nodes.iter().fold(0.0, |m, &k| m.max(v[k].norm())))
}

/// `max |psi|` over active nodes within `width` of the boundary.
pub fn boundary_sup_norm(state: &GLState, width: f64) -> Result<f64> {
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("boundary width must be positive, got {width}")));
    }
    let g = state.grid();
    Ok((0..g.n_nodes())
        .filter(|&k| g.is_active(k) && g.boundary_distance()[k] <= width)
        .fold(0.0, |m, k| m.max(state.psi.values()[k].norm())))
}

/// Quadrature average of `|psi|^4` over the nodes of a ball that stays clear
/// of the boundary.
pub fn ball_l4_average(psi: &ComplexField, center: [f64; 2], radius: f64) -> Result<f64> {
    let g = psi.grid();
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
    }
    if g.distance_to_boundary(center) <= radius {
        return Err(Error::InvalidArgument(format!(
            "ball at ({}, {}) of radius {radius} touches the boundary",
            center[0], center[1]
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..g.n_nodes() {
        let (i, j) = g.node_coords(k);
        let x = g.node_position(i, j);
        if (x[0] - center[0]).hypot(x[1] - center[1]) <= radius {
            let w = g.node_weights()[k];
            num += w * psi.values()[k].norm_sqr().powi(2);
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::EmptyRegion(format!("ball of radius {radius} contains no nodes")));
    }
    Ok(num / den)
}

fn domain_center(g: &Grid2D) -> [f64; 2] {
    let o = g.origin();
    [o[0] + 0.5 * (g.nx() - 1) as f64 * g.hx(), o[1] + 0.5 * (g.ny() - 1) as f64 * g.hy()]
}

/// The centre ball and four neighbours offset by `0.3` domain scales along
/// the axes. The radius is `3` magnetic lengths, capped at `0.3` domain
/// scales.
pub fn default_balls(state: &GLState) -> Vec<([f64; 2], f64)> {
    let g = state.grid();
    let scale = g.domain_scale();
    let radius = (3.0 / state.params.coupling().sqrt()).min(0.3 * scale);
    let c = domain_center(g);
    let d = 0.3 * scale;
    [[0.0, 0.0], [d, 0.0], [-d, 0.0], [0.0, d], [0.0, -d]]
        .iter()
        .map(|o| ([c[0] + o[0], c[1] + o[1]], radius))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GBounds {
    pub avg: f64,
    pub upper: f64,
    pub pass: bool,
}

/// Absolute slack for the comparison at `b <= 1`, where the bound is zero.
pub const G_FLOOR: f64 = 1e-8;

/// Mean ball average against `(1 - 1/b)_+^2`, with relative slack `tol`.
pub fn g_bounds_check(psi: &ComplexField, b: f64, balls: &[([f64; 2], f64)], tol: f64) -> Result<GBounds> {
    if !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("b must be positive, got {b}")));
    }
    if balls.is_empty() {
        return Err(Error::InvalidArgument("no balls given".into()));
    }
    let avg = balls.iter().map(|&(c, r)| ball_l4_average(psi, c, r)).sum::<Result<f64>>()? / balls.len() as f64;
    let upper = (1.0 - 1.0 / b).max(0.0).powi(2);
    let pass = avg <= upper * (1.0 + tol) + G_FLOOR && (b <= 1.0 || avg > 0.0);
    Ok(GBounds { avg, upper, pass })
}

/// A state seen at the magnetic length around a point.
#[derive(Debug, Clone)]
pub struct BlowUp {
    pub phi: ComplexField,
    pub a: EdgeField,
    /// `sqrt(kappa sigma)`.
    pub scale: f64,
}

/// Zooms in on `p` by `sqrt(kappa sigma)`:
/// `phi(y) = exp(i s A(p).y) psi(p + y/s)` and `a(y) = s (A(p + y/s) - A(p))`,
/// both interpolated onto a square grid of half-width `window` and spacing
/// `spacing` in the rescaled variable. The phase removes the constant part
/// of the potential, and `phi` then solves
/// `(-i grad + a)^2 phi = b (1 - |phi|^2) phi` up to discretization.
pub fn rescale_around_point(state: &GLState, p: [f64; 2], window: f64, spacing: f64) -> Result<BlowUp> {
    if !(window > 0.0 && spacing > 0.0 && spacing < window) {
        return Err(Error::InvalidArgument("window and spacing must satisfy 0 < spacing < window".into()));
    }
    let s = state.params.coupling().sqrt();
    let g = state.grid();
    let reach = window * std::f64::consts::SQRT_2 / s;
    if g.distance_to_boundary(p) < reach + g.h() {
        return Err(Error::InvalidArgument(format!(
            "window of half-width {window} around ({}, {}) leaves the interior",
            p[0], p[1]
        )));
    }
    let n = (2.0 * window / spacing).round() as usize + 1;
    let local = Arc::new(Grid2D::rectangle(2.0 * window, 2.0 * window, n, n)?);
    let ap = state.a.sample(p);
    let phi = ComplexField::from_fn(local.clone(), |y| {
        let phase = s * (ap[0] * y[0] + ap[1] * y[1]);
        Complex64::from_polar(1.0, phase) * state.psi.sample([p[0] + y[0] / s, p[1] + y[1] / s])
    });
    let a = EdgeField::from_fn(local, |y| {
        let v = state.a.sample([p[0] + y[0] / s, p[1] + y[1] / s]);
        [s * (v[0] - ap[0]), s * (v[1] - ap[1])]
    });
    Ok(BlowUp { phi, a, scale: s })
}

impl BlowUp {
    /// Sup over interior nodes of `|(-i grad + a)^2 phi - b (1 - |phi|^2) phi|`.
    pub fn residual(&self, b: f64) -> f64 {
        let lap = gl::magnetic_laplacian(&self.a, 1.0, &self.phi);
        let g = self.phi.grid();
        (0..g.n_nodes())
            .filter(|&k| g.node_kind(k) == NodeKind::Interior)
            .map(|k| {
                let f = self.phi.values()[k];
                (lap.values()[k] - b * (1.0 - f.norm_sqr()) * f).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// One observation for a power-law fit against `b - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub b: f64,
    pub value: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    /// `(b - 1, value)` of the points used.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `max value / sqrt(b - 1)`.
    pub c_max: f64,
    /// Points dropped for `b <= 1`, a zero value or failed convergence.
    pub excluded: usize,
}

/// Least squares of `log value` against `log(b - 1)`.
pub fn fit_scaling(points: &[ScalingPoint]) -> Result<ScalingFit> {
    let used: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.converged && p.b > 1.0 && p.value > 0.0)
        .map(|p| (p.b - 1.0, p.value))
        .collect();
    if used.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "a scaling fit needs at least 4 converged points with b > 1, got {}",
            used.len()
        )));
    }
    let n = used.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = used.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all points share one value of b".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let c_max = used.iter().map(|&(x, y)| y / x.sqrt()).fold(0.0, f64::max);
    Ok(ScalingFit { excluded: points.len() - used.len(), points: used, slope, intercept, r2, c_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge;
    use crate::gl::GLParams;
    use crate::grid::DomainKind;

    fn disk_state(n: usize, psi: impl Fn([f64; 2]) -> Complex64) -> GLState {
        let g = Arc::new(Grid2D::new(DomainKind::Disk, 1.0, n).unwrap());
        let a = gauge::build_f(&g).unwrap();
        GLState::new(ComplexField::from_fn(g, psi), a, GLParams::from_b(10.0, 1.2).unwrap()).unwrap()
    }

    #[test]
    fn constant_states() {
        let zero = disk_state(33, |_| Complex64::new(0.0, 0.0));
        assert_eq!(bulk_sup_norm(&zero, &BulkSpec::fixed(0.25)).unwrap(), 0.0);
        assert_eq!(boundary_sup_norm(&zero, 0.1).unwrap(), 0.0);
        assert_eq!(ball_l4_average(&zero.psi, [0.0, 0.0], 0.3).unwrap(), 0.0);
        let c = Complex64::new(0.3, -0.4);
        let s = disk_state(33, |_| c);
        assert!((bulk_sup_norm(&s, &BulkSpec::fixed(0.25)).unwrap() - 0.5).abs() < 1e-15);
        assert!((boundary_sup_norm(&s, 0.1).unwrap() - 0.5).abs() < 1e-15);
        assert!((ball_l4_average(&s.psi, [0.1, 0.2], 0.3).unwrap() - 0.0625).abs() < 1e-14);
    }

    #[test]
    fn margins() {
        let s = disk_state(33, |x| Complex64::new(x[0].hypot(x[1]), 0.0));
        let g = s.grid();
        for k in BulkSpec::fixed(0.4).nodes(g, 10.0).unwrap() {
            assert!(g.boundary_distance()[k] >= 0.4 && g.node_kind(k) == NodeKind::Interior);
        }
        assert_eq!(BulkSpec::kappa_scaled(4.0).nodes(g, 10.0).unwrap(), BulkSpec::fixed(0.4).nodes(g, 10.0).unwrap());
        let mut last = f64::INFINITY;
        for delta in [0.05, 0.2, 0.5, 0.9] {
            let v = bulk_sup_norm(&s, &BulkSpec::fixed(delta)).unwrap();
            assert!(v <= last);
            assert!((v - (1.0 - delta)).abs() < 0.05);
            last = v;
        }
        match bulk_sup_norm(&s, &BulkSpec::fixed(1.5)) {
            Err(Error::EmptyRegion(msg)) => assert!(msg.contains("1.5")),
            other => panic!("{other:?}"),
        }
        assert!(boundary_sup_norm(&s, 0.0).is_err());
    }

    #[test]
    fn balls_must_stay_inside() {
        let s = disk_state(33, |_| Complex64::new(1.0, 0.0));
        assert!(ball_l4_average(&s.psi, [0.5, 0.0], 0.5).is_err());
        assert!(ball_l4_average(&s.psi, [0.0, 0.0], 0.99).is_ok());
        let balls = default_balls(&s);
        assert_eq!(balls.len(), 5);
        for (c, r) in balls {
            assert!(s.grid().distance_to_boundary(c) > r);
        }
    }

    #[test]
    fn ball_average_bounded_by_sup() {
        let s = disk_state(65, |x| Complex64::new(0.5 * (3.0 * x[0]).cos(), 0.2 * x[1]));
        let sup = bulk_sup_norm(&s, &BulkSpec::fixed(0.2)).unwrap();
        let avg = ball_l4_average(&s.psi, [0.1, 0.1], 0.4).unwrap();
        assert!(avg <= sup.powi(4) + 1e-12);
    }

    #[test]
    fn g_bound_arithmetic() {
        let s = disk_state(33, |_| Complex64::new(0.0, 0.0));
        let balls = default_balls(&s);
        let r = g_bounds_check(&s.psi, 2.0, &balls, 0.15).unwrap();
        assert_eq!(r.upper, 0.25);
        assert!(!r.pass, "a vanishing average fails positivity");
        assert!((g_bounds_check(&s.psi, 1.25, &balls, 0.15).unwrap().upper - 0.04).abs() < 1e-15);
        let r = g_bounds_check(&s.psi, 1.0, &balls, 0.15).unwrap();
        assert_eq!(r.upper, 0.0);
        assert!(r.pass);
        let half = disk_state(33, |_| Complex64::new(0.5f64.sqrt(), 0.0));
        assert!(g_bounds_check(&half.psi, 2.0, &balls, 0.15).unwrap().pass);
        assert!(!g_bounds_check(&half.psi, 1.25, &balls, 0.15).unwrap().pass);
    }

    #[test]
    fn fits() {
        let sqrt: Vec<ScalingPoint> =
            [0.05, 0.1, 0.2, 0.4].iter().map(|&x| ScalingPoint { b: 1.0 + x, value: f64::sqrt(x), converged: true }).collect();
        let f = fit_scaling(&sqrt).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        assert!((f.c_max - 1.0).abs() < 1e-12);
        let lin: Vec<ScalingPoint> =
            [0.05, 0.1, 0.2, 0.4].iter().map(|&x| ScalingPoint { b: 1.0 + x, value: x, converged: true }).collect();
        assert!((fit_scaling(&lin).unwrap().slope - 1.0).abs() < 1e-12);
        let mut mixed = sqrt.clone();
        mixed.push(ScalingPoint { b: 0.9, value: 1e-9, converged: true });
        mixed.push(ScalingPoint { b: 1.3, value: 7.0, converged: false });
        let f = fit_scaling(&mixed).unwrap();
        assert_eq!(f.excluded, 2);
        assert!((f.slope - 0.5).abs() < 1e-12);
        assert!(fit_scaling(&sqrt[..3]).is_err());
    }

    #[test]
    fn blow_up_of_normal_state() {
        let s = disk_state(129, |_| Complex64::new(0.0, 0.0));
        let p = [0.1, -0.05];
        let up = rescale_around_point(&s, p, 3.0, 0.25).unwrap();
        assert_eq!(up.phi.sup_norm(), 0.0);
        let curl = gauge::curl(&up.a).unwrap();
        for &c in curl.values() {
            assert!((c - 1.0).abs() < 1e-6, "{c}");
        }
        assert!(rescale_around_point(&s, [0.9, 0.0], 3.0, 0.25).is_err());
    }

    #[test]
    fn blow_up_keeps_modulus_at_the_centre() {
        let s = disk_state(65, |x| Complex64::new(0.3 + x[0], 0.2 * x[1] - 0.1));
        let g = s.grid().clone();
        let (i, j) = (30, 35);
        let p = g.node_position(i, j);
        let up = rescale_around_point(&s, p, 2.0, 0.2).unwrap();
        let lg = up.phi.grid();
        let c = lg.node_index(lg.nx() / 2, lg.ny() / 2);
        assert!((up.phi.values()[c].norm() - s.psi.values()[g.node_index(i, j)].norm()).abs() < 1e-12);
    }
}
