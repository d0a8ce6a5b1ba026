//! Discrete exterior calculus on the staggered lattice and gauge fixing.
//!
//! Node scalars map to edges by the gradient, edges to plaquettes by the curl.
//! `curl(grad(eta)) = 0` holds identically. The divergence is the negative
//! weighted adjoint of the gradient, so a field with vanishing divergence at
//! every active node (boundary nodes included) is the lattice version of
//! `div A = 0` in the domain with `A . nu = 0` on its boundary.
//!
//! Coulomb potentials are built from a stream function living on plaquette
//! centres, `A = W_e^{-1} C^T (h_x h_y xi)`; with zero stream function outside
//! the domain this makes the divergence vanish by construction.

use std::sync::Arc;

use num_complex::Complex64;

use crate::cg::{self, CgOptions, CgReport};
use crate::error::{Error, Result};
use crate::field::{ComplexField, EdgeField, PlaquetteField, ScalarField};
use crate::grid::Grid2D;

/// Relative residual used for every Poisson solve in this module.
pub const POISSON_TOL: f64 = 1e-10;

fn check_bounded(grid: &Grid2D) -> Result<()> {
    if grid.is_periodic() {
        Err(Error::InvalidArgument("gauge operators need a bounded grid".into()))
    } else {
        Ok(())
    }
}

/// Tail/head node indices and length of every edge.
fn edge_nodes(grid: &Grid2D, e: usize) -> (usize, usize, f64) {
    let nh = grid.n_hedges();
    let nx = grid.nx();
    if e < nh {
        let (i, j) = (e % (nx - 1), e / (nx - 1));
        let t = j * nx + i;
        (t, t + 1, grid.hx())
    } else {
        let t = e - nh;
        (t, t + nx, grid.hy())
    }
}

/// The four edges of plaquette `p` as `(bottom, top, left, right)`.
fn plaquette_edges(grid: &Grid2D, p: usize) -> [usize; 4] {
    let row = grid.nx() - 1;
    let (i, j) = (p % row, p / row);
    [grid.hedge_index(i, j), grid.hedge_index(i, j + 1), grid.vedge_index(i, j), grid.vedge_index(i + 1, j)]
}

/// Edge-wise gradient of a node field; zero on inactive edges.
pub fn gradient_values(grid: &Grid2D, eta: &[f64]) -> Vec<f64> {
    (0..grid.n_edges())
        .map(|e| {
            if grid.edge_weight(e) > 0.0 {
                let (t, h, len) = edge_nodes(grid, e);
                (eta[h] - eta[t]) / len
            } else {
                0.0
            }
        })
        .collect()
}

pub fn gradient(eta: &ScalarField) -> Result<EdgeField> {
    check_bounded(eta.grid())?;
    EdgeField::from_values(eta.grid().clone(), gradient_values(eta.grid(), eta.values()))
}

/// Plaquette circulation divided by the nominal cell area.
pub fn curl_values(grid: &Grid2D, a: &[f64]) -> Vec<f64> {
    let (hx, hy) = (grid.hx(), grid.hy());
    grid.plaquette_weights()
        .iter()
        .enumerate()
        .map(|(p, &w)| {
            if w > 0.0 {
                let [b, t, l, r] = plaquette_edges(grid, p);
                (hx * (a[b] - a[t]) + hy * (a[r] - a[l])) / (hx * hy)
            } else {
                0.0
            }
        })
        .collect()
}

pub fn curl(a: &EdgeField) -> Result<PlaquetteField> {
    check_bounded(a.grid())?;
    PlaquetteField::from_values(a.grid().clone(), curl_values(a.grid(), a.values()))
}

/// `G^T W_e a` at every node.
fn weighted_grad_adjoint(grid: &Grid2D, a: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (e, &ae) in a.iter().enumerate() {
        let w = grid.edge_weight(e);
        if w > 0.0 {
            let (t, h, len) = edge_nodes(grid, e);
            let flux = w * ae / len;
            out[h] += flux;
            out[t] -= flux;
        }
    }
}

/// Weighted divergence `-(1/w_n) (G^T W_e a)_n`; on boundary nodes it
/// includes the normal flux through the boundary.
pub fn divergence_values(grid: &Grid2D, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.n_nodes()];
    weighted_grad_adjoint(grid, a, &mut out);
    out.iter()
        .zip(grid.node_weights())
        .map(|(v, &w)| if w > 0.0 { -v / w } else { 0.0 })
        .collect()
}

pub fn divergence(a: &EdgeField) -> Result<ScalarField> {
    check_bounded(a.grid())?;
    ScalarField::from_values(a.grid().clone(), divergence_values(a.grid(), a.values()))
}

/// Largest divergence defect over boundary nodes, measured as the net flux
/// through the boundary part of each node's dual cell.
pub fn normal_trace_defect(a: &EdgeField) -> Result<f64> {
    check_bounded(a.grid())?;
    let grid = a.grid();
    let div = divergence_values(grid, a.values());
    Ok((0..grid.n_nodes())
        .filter(|&k| grid.node_kind(k) == crate::grid::NodeKind::Boundary)
        .map(|k| (div[k] * grid.node_weights()[k]).abs())
        .fold(0.0, f64::max))
}

/// Stream function on plaquette centres; zero outside the domain.
#[derive(Debug, Clone)]
pub struct StreamFunction {
    xi: PlaquetteField,
}

impl StreamFunction {
    pub fn values(&self) -> &PlaquetteField {
        &self.xi
    }

    /// The Coulomb potential `A = grad-perp(xi)` in its weighted lattice form.
    pub fn potential(&self) -> EdgeField {
        let grid = self.xi.grid();
        let (hx, hy) = (grid.hx(), grid.hy());
        let zeta: Vec<f64> = self.xi.values().iter().map(|x| -hx * hy * x).collect();
        let mut a = vec![0.0; grid.n_edges()];
        curl_adjoint(grid, &zeta, &mut a);
        for (e, v) in a.iter_mut().enumerate() {
            let w = grid.edge_weight(e);
            *v = if w > 0.0 { *v / w } else { 0.0 };
        }
        EdgeField::from_values(grid.clone(), a).expect("edge count")
    }
}

/// `C^T z`: spreads plaquette values onto their edges.
fn curl_adjoint(grid: &Grid2D, z: &[f64], out: &mut [f64]) {
    let (hx, hy) = (grid.hx(), grid.hy());
    out.iter_mut().for_each(|v| *v = 0.0);
    for (p, &w) in grid.plaquette_weights().iter().enumerate() {
        if w > 0.0 {
            let [b, t, l, r] = plaquette_edges(grid, p);
            out[b] += z[p] / hy;
            out[t] -= z[p] / hy;
            out[r] += z[p] / hx;
            out[l] -= z[p] / hx;
        }
    }
}

/// The unique Coulomb potential whose plaquette curls equal `target` on every
/// active plaquette.
pub fn coulomb_from_curl(grid: &Arc<Grid2D>, target: &[f64]) -> Result<(StreamFunction, CgReport)> {
    check_bounded(grid)?;
    let np = grid.n_plaquettes();
    if target.len() != np {
        return Err(Error::InvalidArgument("curl target has wrong length".into()));
    }
    let inv_we: Vec<f64> = (0..grid.n_edges())
        .map(|e| {
            let w = grid.edge_weight(e);
            if w > 0.0 {
                1.0 / w
            } else {
                0.0
            }
        })
        .collect();
    let apply = |z: &[f64], out: &mut [f64]| {
        let mut t = vec![0.0; inv_we.len()];
        curl_adjoint(grid, z, &mut t);
        for (v, iw) in t.iter_mut().zip(&inv_we) {
            *v *= iw;
        }
        out.copy_from_slice(&curl_values(grid, &t));
    };
    let (hx, hy) = (grid.hx(), grid.hy());
    let diag: Vec<f64> = (0..np)
        .map(|p| {
            if grid.plaquette_weights()[p] > 0.0 {
                let [b, t, l, r] = plaquette_edges(grid, p);
                (inv_we[b] + inv_we[t]) / (hy * hy) + (inv_we[l] + inv_we[r]) / (hx * hx)
            } else {
                0.0
            }
        })
        .collect();
    let rhs: Vec<f64> = target
        .iter()
        .zip(grid.plaquette_weights())
        .map(|(c, &w)| if w > 0.0 { *c } else { 0.0 })
        .collect();
    let mut zeta = vec![0.0; np];
    let opts = CgOptions { rel_tol: POISSON_TOL, ..CgOptions::default() };
    let report = cg::solve(apply, &diag, &rhs, &mut zeta, opts, "stream-function Poisson")?;
    let xi = zeta.iter().map(|z| -z / (hx * hy)).collect();
    Ok((StreamFunction { xi: PlaquetteField::from_values(grid.clone(), xi)? }, report))
}

/// The reference potential with unit curl, zero divergence and zero normal
/// trace.
pub fn build_f(grid: &Arc<Grid2D>) -> Result<EdgeField> {
    let ones = vec![1.0; grid.n_plaquettes()];
    let (xi, _) = coulomb_from_curl(grid, &ones)?;
    Ok(xi.potential())
}

/// Solves the weighted Neumann problem `G^T W G eta = G^T W a`, so that
/// `a - grad(eta)` is divergence free. `eta` has zero weighted mean.
pub fn gauge_potential(a: &EdgeField) -> Result<ScalarField> {
    let grid = a.grid();
    check_bounded(grid)?;
    let n = grid.n_nodes();
    let mut rhs = vec![0.0; n];
    weighted_grad_adjoint(grid, a.values(), &mut rhs);
    // Remove round-off in the compatibility condition.
    let active: Vec<usize> = (0..n).filter(|&k| grid.is_active(k)).collect();
    let mean = active.iter().map(|&k| rhs[k]).sum::<f64>() / active.len() as f64;
    for &k in &active {
        rhs[k] -= mean;
    }
    let mut diag = vec![0.0; n];
    for e in 0..grid.n_edges() {
        let w = grid.edge_weight(e);
        if w > 0.0 {
            let (t, h, len) = edge_nodes(grid, e);
            diag[t] += w / (len * len);
            diag[h] += w / (len * len);
        }
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        let g = gradient_values(grid, x);
        weighted_grad_adjoint(grid, &g, out);
    };
    let scale: f64 = a.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let opts = CgOptions {
        rel_tol: POISSON_TOL,
        abs_tol: 1e-14 * scale * grid.area().sqrt(),
        ..CgOptions::default()
    };
    let mut eta = vec![0.0; n];
    cg::solve(apply, &diag, &rhs, &mut eta, opts, "gauge Poisson")?;
    let w = grid.node_weights();
    let m: f64 = eta.iter().zip(w).map(|(e, w)| e * w).sum::<f64>() / grid.area();
    for &k in &active {
        eta[k] -= m;
    }
    ScalarField::from_values(grid.clone(), eta)
}

/// Removes the gradient part of `a`: the result is divergence free with zero
/// normal trace and has the same plaquette curls.
pub fn coulomb_project(a: &EdgeField) -> Result<EdgeField> {
    let eta = gauge_potential(a)?;
    Ok(a.sub(&gradient(&eta)?))
}

/// Applies the gauge transformation `(psi, A) -> (exp(-i c eta) psi, A + grad eta)`
/// with coupling `c = kappa sigma`, which leaves the lattice energy invariant.
pub fn gauge_transform(
    psi: &ComplexField,
    a: &EdgeField,
    eta: &ScalarField,
    coupling: f64,
) -> Result<(ComplexField, EdgeField)> {
    let rot = psi
        .values()
        .iter()
        .zip(eta.values())
        .map(|(p, e)| p * Complex64::from_polar(1.0, -coupling * e))
        .collect();
    let psi2 = ComplexField::from_values(psi.grid().clone(), rot)?;
    Ok((psi2, a.add(&gradient(eta)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Norm;
    use crate::grid::{DomainKind, NodeKind};

    fn grid(kind: DomainKind, n: usize) -> Arc<Grid2D> {
        Arc::new(Grid2D::new(kind, 1.0, n).unwrap())
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn curl_of_gradient_vanishes() {
        let g = grid(DomainKind::Disk, 21);
        let eta = ScalarField::from_fn(g.clone(), |x| (3.0 * x[0]).sin() * x[1].exp());
        let c = curl(&gradient(&eta).unwrap()).unwrap();
        assert!(max_abs(c.values()) < 1e-12);
    }

    #[test]
    fn build_f_has_unit_curl_and_no_divergence() {
        for kind in [DomainKind::Rectangle, DomainKind::Disk] {
            let g = grid(kind, 33);
            let f = build_f(&g).unwrap();
            let c = curl(&f).unwrap();
            for (p, &w) in g.plaquette_weights().iter().enumerate() {
                if w > 0.0 {
                    assert!((c.values()[p] - 1.0).abs() < 1e-7, "curl {}", c.values()[p]);
                }
            }
            let div = divergence(&f).unwrap();
            let scale = f.norm(Norm::Inf) / g.h();
            assert!(max_abs(div.values()) < 1e-12 * scale);
            assert!(normal_trace_defect(&f).unwrap() < 1e-12 * scale * g.h() * g.h());
            // Stokes: total flux equals the area.
            assert!((c.integral() - g.area()).abs() < 1e-8);
        }
    }

    fn symmetric_gauge_error(n: usize) -> f64 {
        let g = grid(DomainKind::Disk, n);
        let f = build_f(&g).unwrap();
        let sym = EdgeField::from_fn(g.clone(), |x| [-0.5 * x[1], 0.5 * x[0]]);
        // Compare away from the cut cells where the stencil is first order.
        let mut err: f64 = 0.0;
        for e in 0..g.n_edges() {
            let m = g.edge_midpoint(e);
            if g.distance_to_boundary(m) > 0.1 {
                err = err.max((f.values()[e] - sym.values()[e]).abs());
            }
        }
        err
    }

    #[test]
    fn build_f_on_disk_matches_symmetric_gauge() {
        let e1 = symmetric_gauge_error(33);
        let e2 = symmetric_gauge_error(65);
        assert!(e1 < 0.03, "{e1}");
        assert!(e2 < 0.6 * e1, "{e1} -> {e2}");
    }

    #[test]
    fn coulomb_projection_properties() {
        let g = grid(DomainKind::Disk, 33);
        let f = build_f(&g).unwrap();
        let again = coulomb_project(&f).unwrap();
        assert!(max_abs(again.sub(&f).values()) < 1e-10);

        let eta = ScalarField::from_fn(g.clone(), |x| x[0] * x[1]);
        let grad = gradient(&eta).unwrap();
        let killed = coulomb_project(&grad).unwrap();
        assert!(killed.norm(Norm::L2) < 1e-8 * grad.norm(Norm::L2));

        let shifted = f.add(&grad);
        let back = coulomb_project(&shifted).unwrap();
        assert!(back.sub(&f).norm(Norm::L2) < 1e-8 * f.norm(Norm::L2));
    }

    #[test]
    fn projection_preserves_curl_and_is_unique() {
        let g = grid(DomainKind::Rectangle, 25);
        let a = EdgeField::from_fn(g.clone(), |x| [x[1] * x[1] + x[0], (2.0 * x[0]).cos() - x[1]]);
        let proj = coulomb_project(&a).unwrap();
        let c0 = curl(&a).unwrap();
        let c1 = curl(&proj).unwrap();
        let diff: Vec<f64> = c0.values().iter().zip(c1.values()).map(|(x, y)| x - y).collect();
        let diff = PlaquetteField::from_values(g.clone(), diff).unwrap();
        assert!(diff.norm(Norm::L2) <= 1e-8 * c0.norm(Norm::L2));
        // Second route: the stream-function construction with the same curls.
        let (xi, _) = coulomb_from_curl(&g, c0.values()).unwrap();
        let other = xi.potential();
        assert!(other.sub(&proj).norm(Norm::L2) <= 1e-8);
        let div = divergence(&proj).unwrap();
        for k in 0..g.n_nodes() {
            if g.node_kind(k) != NodeKind::Exterior {
                assert!(div.values()[k].abs() < 1e-6);
            }
        }
    }
}
