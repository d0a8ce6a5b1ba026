//! Gauge-invariant lattice Ginzburg-Landau energy, its gradient, the residual
//! of the Euler-Lagrange system, and the a priori diagnostics.
//!
//! The kinetic term uses link variables. For an edge from node `t` to node
//! `h` of length `l` carrying the potential value `A_e`,
//!
//! ```text
//! U_e = exp(-i kappa sigma l A_e),    |p psi|^2  ~  |psi_h - U_e psi_t|^2 / l^2
//! ```
//!
//! so the lattice energy is exactly invariant under
//! `psi -> exp(-i kappa sigma eta) psi`, `A -> A + grad eta`. The energy is
//!
//! ```text
//! E = sum_e w_e/l_e^2 |psi_h - U_e psi_t|^2
//!   + sum_n w_n (-kappa^2 |psi_n|^2 + kappa^2/2 |psi_n|^4)
//!   + (kappa sigma)^2 sum_p w_p (curl_p A - beta)^2
//! ```
//!
//! with the clipped-area weights of [`Grid2D`]. The boundary conditions of the
//! continuous system are the natural conditions of this sum. The residual is
//! the gradient divided by the matching weights, `r_psi = g_psi / (2 w_n)` and
//! `r_A = g_A / (2 (kappa sigma)^2 w_e)`, which discretises
//! `p^2 psi - kappa^2 (1 - |psi|^2) psi` and
//! `curl^2 A + (1/(kappa sigma)) Re(conj(psi) p psi)`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, EdgeField, Norm, PlaquetteField, ScalarField};
use crate::gauge;
use crate::grid::{DomainKind, Grid2D, NodeKind};

/// Stored value of the surface-superconductivity constant.
pub const THETA_ZERO: f64 = 0.59;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GLParams {
    pub kappa: f64,
    pub sigma: f64,
    pub beta: f64,
}

impl GLParams {
    pub fn new(kappa: f64, sigma: f64) -> Result<Self> {
        if !(kappa > 0.0 && sigma > 0.0 && kappa.is_finite() && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kappa and sigma must be positive, got {kappa}, {sigma}"
            )));
        }
        Ok(GLParams { kappa, sigma, beta: 1.0 })
    }

    /// Parameters from `kappa` and the field ratio `b = kappa / sigma`.
    pub fn from_b(kappa: f64, b: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(Error::InvalidArgument(format!("b must be positive, got {b}")));
        }
        Self::new(kappa, kappa / b)
    }

    pub fn b(&self) -> f64 {
        self.kappa / self.sigma
    }

    /// `kappa sigma`, the coupling in front of `A`.
    pub fn coupling(&self) -> f64 {
        self.kappa * self.sigma
    }

    pub fn theta_zero(&self) -> f64 {
        THETA_ZERO
    }

    /// Largest spacing that resolves the magnetic length by four cells.
    pub fn max_spacing(&self) -> f64 {
        0.25 / self.coupling().sqrt()
    }

    pub fn resolved_by(&self, grid: &Grid2D) -> bool {
        grid.h() <= self.max_spacing() * (1.0 + 1e-12)
    }
}

/// An order parameter and vector potential on a shared grid.
#[derive(Debug, Clone)]
pub struct GLState {
    pub psi: ComplexField,
    pub a: EdgeField,
    pub params: GLParams,
}

impl GLState {
    pub fn new(psi: ComplexField, a: EdgeField, params: GLParams) -> Result<Self> {
        if !Arc::ptr_eq(psi.grid(), a.grid()) && **psi.grid() != **a.grid() {
            return Err(Error::InvalidArgument("psi and A live on different grids".into()));
        }
        if psi.grid().is_periodic() {
            return Err(Error::InvalidArgument("GL states need a bounded grid".into()));
        }
        Ok(GLState { psi, a, params })
    }

    /// The normal state `(0, F)`.
    pub fn normal(grid: &Arc<Grid2D>, params: GLParams) -> Result<Self> {
        let f = gauge::build_f(grid)?;
        Self::new(ComplexField::zeros(grid.clone()), f, params)
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        self.psi.grid()
    }
}

/// Accumulates the kinetic term and its gradients. `coupling` multiplies the
/// potential inside the link phase.
pub(crate) fn kinetic(
    grid: &Grid2D,
    coupling: f64,
    psi: &[Complex64],
    a: &[f64],
    gpsi: &mut [Complex64],
    ga: &mut [f64],
) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let nh = grid.n_hedges();
    let hw = grid.hedge_weights();
    let vw = grid.vedge_weights();
    let mut energy = 0.0;
    let mut edge = |e: usize, w: f64, len: f64, t: usize, h: usize| {
        let c = w / (len * len);
        let (s, co) = (coupling * len * a[e]).sin_cos();
        let u = Complex64::new(co, -s);
        let d = psi[h] - u * psi[t];
        energy += c * d.norm_sqr();
        gpsi[h] += d * (2.0 * c);
        gpsi[t] -= u.conj() * d * (2.0 * c);
        ga[e] += 2.0 * c * coupling * len * (psi[h].conj() * d).im;
    };
    for j in 0..ny {
        for i in 0..nx - 1 {
            let e = j * (nx - 1) + i;
            let w = hw[e];
            if w > 0.0 {
                let t = j * nx + i;
                edge(e, w, hx, t, t + 1);
            }
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let k = j * nx + i;
            let w = vw[k];
            if w > 0.0 {
                edge(nh + k, w, hy, k, k + nx);
            }
        }
    }
    energy
}

/// Energy and exact gradient of the lattice functional. Gradients are
/// written (not accumulated) into `gpsi` (as `dE/dRe + i dE/dIm`) and `ga`.
pub(crate) fn energy_and_gradient(
    grid: &Grid2D,
    params: &GLParams,
    psi: &[Complex64],
    a: &[f64],
    gpsi: &mut [Complex64],
    ga: &mut [f64],
) -> f64 {
    gpsi.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
    ga.iter_mut().for_each(|g| *g = 0.0);
    let k2 = params.kappa * params.kappa;
    let coupling = params.coupling();
    let mut energy = kinetic(grid, coupling, psi, a, gpsi, ga);

    for ((&w, p), g) in grid.node_weights().iter().zip(psi).zip(gpsi.iter_mut()) {
        if w > 0.0 {
            let m = p.norm_sqr();
            energy += w * k2 * (-m + 0.5 * m * m);
            *g += p * (2.0 * w * k2 * (m - 1.0));
        }
    }

    let (nx, hx, hy) = (grid.nx(), grid.hx(), grid.hy());
    let nh = grid.n_hedges();
    let row = nx - 1;
    let field_scale = coupling * coupling;
    for (p, &w) in grid.plaquette_weights().iter().enumerate() {
        if w > 0.0 {
            let (i, j) = (p % row, p / row);
            let b = j * row + i;
            let t = b + row;
            let l = nh + j * nx + i;
            let r = l + 1;
            let c = (hx * (a[b] - a[t]) + hy * (a[r] - a[l])) / (hx * hy) - params.beta;
            energy += field_scale * w * c * c;
            let g = 2.0 * field_scale * w * c;
            ga[b] += g / hy;
            ga[t] -= g / hy;
            ga[r] += g / hx;
            ga[l] -= g / hx;
        }
    }
    energy
}

pub fn energy(state: &GLState) -> f64 {
    let grid = state.grid();
    let mut gpsi = vec![Complex64::new(0.0, 0.0); grid.n_nodes()];
    let mut ga = vec![0.0; grid.n_edges()];
    energy_and_gradient(grid, &state.params, state.psi.values(), state.a.values(), &mut gpsi, &mut ga)
}

/// Exact gradient of the lattice energy with respect to the node values of
/// `psi` (as `dE/dRe + i dE/dIm`) and the edge values of `A`.
pub fn energy_gradient(state: &GLState) -> (ComplexField, EdgeField) {
    let grid = state.grid();
    let mut gpsi = vec![Complex64::new(0.0, 0.0); grid.n_nodes()];
    let mut ga = vec![0.0; grid.n_edges()];
    energy_and_gradient(grid, &state.params, state.psi.values(), state.a.values(), &mut gpsi, &mut ga);
    (
        ComplexField::from_values(grid.clone(), gpsi).expect("node count"),
        EdgeField::from_values(grid.clone(), ga).expect("edge count"),
    )
}

/// Converts energy gradients into residuals in place.
pub(crate) fn gradient_to_residual(grid: &Grid2D, params: &GLParams, gpsi: &mut [Complex64], ga: &mut [f64]) {
    for (g, &w) in gpsi.iter_mut().zip(grid.node_weights()) {
        *g = if w > 0.0 { *g / (2.0 * w) } else { Complex64::new(0.0, 0.0) };
    }
    let s = 2.0 * params.coupling() * params.coupling();
    for (e, g) in ga.iter_mut().enumerate() {
        let w = grid.edge_weight(e);
        *g = if w > 0.0 { *g / (s * w) } else { 0.0 };
    }
}

/// Defects of the Euler-Lagrange system.
#[derive(Debug, Clone)]
pub struct Residual {
    /// `p^2 psi - kappa^2 (1 - |psi|^2) psi` at every active node.
    pub r_psi: ComplexField,
    /// `curl^2 A + Re(conj(psi) p psi) / (kappa sigma)` on active edges.
    pub r_a: EdgeField,
    /// One-sided `|nu . p psi|` at boundary nodes.
    pub b_psi: ScalarField,
    /// `curl A - 1` on plaquettes touching the boundary.
    pub b_curl: PlaquetteField,
}

impl Residual {
    pub fn psi_inf(&self) -> f64 {
        self.r_psi.sup_norm()
    }
    pub fn a_inf(&self) -> f64 {
        self.r_a.norm(Norm::Inf)
    }

    /// Sup norm of the residual with the psi part scaled by `kappa^2`.
    pub fn scaled_inf(&self, params: &GLParams) -> f64 {
        (self.psi_inf() / (params.kappa * params.kappa)).max(self.a_inf())
    }
}

pub fn residual(state: &GLState) -> Residual {
    let grid = state.grid();
    let params = &state.params;
    let mut gpsi = vec![Complex64::new(0.0, 0.0); grid.n_nodes()];
    let mut ga = vec![0.0; grid.n_edges()];
    energy_and_gradient(grid, params, state.psi.values(), state.a.values(), &mut gpsi, &mut ga);
    gradient_to_residual(grid, params, &mut gpsi, &mut ga);
    Residual {
        r_psi: ComplexField::from_values(grid.clone(), gpsi).expect("node count"),
        r_a: EdgeField::from_values(grid.clone(), ga).expect("edge count"),
        b_psi: neumann_defect(state),
        b_curl: boundary_curl_defect(state),
    }
}

fn outward_normal(grid: &Grid2D, x: [f64; 2]) -> [f64; 2] {
    match grid.kind() {
        DomainKind::Disk => {
            let r = 0.5 * (grid.nx() - 1) as f64 * grid.hx();
            let c = [grid.origin()[0] + r, grid.origin()[1] + r];
            let d = [x[0] - c[0], x[1] - c[1]];
            let n = d[0].hypot(d[1]).max(f64::MIN_POSITIVE);
            [d[0] / n, d[1] / n]
        }
        _ => {
            let o = grid.origin();
            let x1 = o[0] + (grid.nx() - 1) as f64 * grid.hx();
            let y1 = o[1] + (grid.ny() - 1) as f64 * grid.hy();
            let tol = 1e-9 * grid.h();
            let mut n = [0.0f64, 0.0];
            if (x[0] - o[0]).abs() < tol {
                n[0] = -1.0;
            } else if (x[0] - x1).abs() < tol {
                n[0] = 1.0;
            }
            if (x[1] - o[1]).abs() < tol {
                n[1] = -1.0;
            } else if (x[1] - y1).abs() < tol {
                n[1] = 1.0;
            }
            let len = n[0].hypot(n[1]).max(1.0);
            [n[0] / len, n[1] / len]
        }
    }
}

fn neumann_defect(state: &GLState) -> ScalarField {
    let grid = state.grid();
    let psi = state.psi.values();
    let a = state.a.values();
    let c = state.params.coupling();
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = vec![0.0; grid.n_nodes()];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if grid.node_kind(k) != NodeKind::Boundary {
                continue;
            }
            let nu = outward_normal(grid, grid.node_position(i, j));
            let mut d = Complex64::new(0.0, 0.0);
            // x direction: step inward, against the normal.
            if nu[0] != 0.0 {
                let (nb, e, sign) = if nu[0] > 0.0 && i > 0 {
                    (k - 1, Some(grid.hedge_index(i - 1, j)), -1.0)
                } else if nu[0] < 0.0 && i + 1 < nx {
                    (k + 1, Some(grid.hedge_index(i, j)), 1.0)
                } else {
                    (k, None, 0.0)
                };
                if let Some(e) = e.filter(|&e| grid.edge_weight(e) > 0.0) {
                    d += nu[0] * covariant_step(psi[k], psi[nb], a[e], c, grid.hx(), sign);
                }
            }
            if nu[1] != 0.0 {
                let (nb, e, sign) = if nu[1] > 0.0 && j > 0 {
                    (k - nx, Some(grid.vedge_index(i, j - 1)), -1.0)
                } else if nu[1] < 0.0 && j + 1 < ny {
                    (k + nx, Some(grid.vedge_index(i, j)), 1.0)
                } else {
                    (k, None, 0.0)
                };
                if let Some(e) = e.filter(|&e| grid.edge_weight(e) > 0.0) {
                    d += nu[1] * covariant_step(psi[k], psi[nb], a[e], c, grid.hy(), sign);
                }
            }
            out[k] = d.norm();
        }
    }
    ScalarField::from_values(grid.clone(), out).expect("node count")
}

/// One-sided covariant derivative `-i (d/ds) + c A` along an edge; `sign`
/// is +1 when the neighbour is the head of the edge.
fn covariant_step(here: Complex64, there: Complex64, a: f64, c: f64, len: f64, sign: f64) -> Complex64 {
    // Parallel transport `there` back to `here`.
    let u = Complex64::from_polar(1.0, sign * c * len * a);
    let diff = (u * there - here) / (sign * len);
    -Complex64::i() * diff
}

fn boundary_curl_defect(state: &GLState) -> PlaquetteField {
    let grid = state.grid();
    let curl = gauge::curl_values(grid, state.a.values());
    let row = grid.nx() - 1;
    let nx = grid.nx();
    let full = grid.hx() * grid.hy();
    let out = grid
        .plaquette_weights()
        .iter()
        .enumerate()
        .map(|(p, &w)| {
            if w <= 0.0 {
                return 0.0;
            }
            let (i, j) = (p % row, p / row);
            let corners = [j * nx + i, j * nx + i + 1, (j + 1) * nx + i, (j + 1) * nx + i + 1];
            let touches = w < full * (1.0 - 1e-12)
                || corners.iter().any(|&c| grid.node_kind(c) == NodeKind::Boundary);
            if touches {
                curl[p] - state.params.beta
            } else {
                0.0
            }
        })
        .collect();
    PlaquetteField::from_values(grid.clone(), out).expect("plaquette count")
}

/// Magnetic Laplacian `p_{cA}^2 f` with natural boundary conditions.
pub fn magnetic_laplacian(a: &EdgeField, coupling: f64, f: &ComplexField) -> ComplexField {
    let grid = f.grid();
    let mut g = vec![Complex64::new(0.0, 0.0); grid.n_nodes()];
    let mut ga = vec![0.0; grid.n_edges()];
    kinetic(grid, coupling, f.values(), a.values(), &mut g, &mut ga);
    for (v, &w) in g.iter_mut().zip(grid.node_weights()) {
        *v = if w > 0.0 { *v / (2.0 * w) } else { Complex64::new(0.0, 0.0) };
    }
    ComplexField::from_values(grid.clone(), g).expect("node count")
}

/// The symmetric gauge `(-x_2/2, x_1/2)` sampled on edge midpoints.
pub fn symmetric_gauge(grid: &Arc<Grid2D>) -> EdgeField {
    EdgeField::from_fn(grid.clone(), |x| [-0.5 * x[1], 0.5 * x[0]])
}

/// Left and right sides of the two a priori inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AprioriDiagnostics {
    /// Discrete H^2 proxy of `A - F`.
    pub lhs42: f64,
    pub rhs42: f64,
    /// `|curl A - 1|_2`.
    pub lhs46: f64,
    pub rhs46: f64,
}

impl AprioriDiagnostics {
    pub fn ratio42(&self) -> f64 {
        ratio(self.lhs42, self.rhs42)
    }
    pub fn ratio46(&self) -> f64 {
        ratio(self.lhs46, self.rhs46)
    }
}

fn ratio(l: f64, r: f64) -> f64 {
    if r > 0.0 {
        l / r
    } else if l == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Evaluates both sides of the a priori bounds on `A - F` and `curl A - 1`.
/// Refuses states whose scaled residual exceeds `tol`.
pub fn apriori_diagnostics(state: &GLState, tol: f64) -> Result<AprioriDiagnostics> {
    let res = residual(state);
    let scaled = res.scaled_inf(&state.params);
    if !(scaled <= tol) {
        return Err(Error::NotConverged(format!("scaled residual {scaled:.3e} exceeds {tol:.1e}")));
    }
    let grid = state.grid();
    let p = &state.params;
    let curl = gauge::curl_values(grid, state.a.values());
    let lhs46 = grid
        .plaquette_weights()
        .iter()
        .zip(&curl)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, c)| w * (c - p.beta).powi(2))
        .sum::<f64>()
        .sqrt();
    let l2 = state.psi.norm(Norm::L2);
    let linf = state.psi.sup_norm();
    let f = gauge::build_f(grid)?;
    let diff = state.a.sub(&f);
    let lhs42 = h2_proxy(grid, diff.values());
    let c = p.coupling();
    Ok(AprioriDiagnostics {
        lhs42,
        rhs42: (1.0 + c + p.kappa * p.kappa) / c * l2 * linf,
        lhs46,
        rhs46: linf * l2 / p.sigma,
    })
}

/// Square root of the sum of squared values, first and second differences of
/// each edge family, all weighted by the cell area.
fn h2_proxy(grid: &Grid2D, d: &[f64]) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let area = hx * hy;
    let nh = grid.n_hedges();
    let mut sum = 0.0;
    // (family offset, row length, rows)
    for (off, rl, rows) in [(0, nx - 1, ny), (nh, nx, ny - 1)] {
        let at = |i: usize, j: usize| -> Option<f64> {
            let e = off + j * rl + i;
            (grid.edge_weight(e) > 0.0).then(|| d[e])
        };
        for j in 0..rows {
            for i in 0..rl {
                let Some(v) = at(i, j) else { continue };
                sum += area * v * v;
                if i + 1 < rl {
                    if let Some(r) = at(i + 1, j) {
                        sum += area * ((r - v) / hx).powi(2);
                    }
                }
                if j + 1 < rows {
                    if let Some(u) = at(i, j + 1) {
                        sum += area * ((u - v) / hy).powi(2);
                    }
                }
                if i > 0 && i + 1 < rl {
                    if let (Some(l), Some(r)) = (at(i - 1, j), at(i + 1, j)) {
                        sum += area * ((l - 2.0 * v + r) / (hx * hx)).powi(2);
                    }
                }
                if j > 0 && j + 1 < rows {
                    if let (Some(b), Some(u)) = (at(i, j - 1), at(i, j + 1)) {
                        sum += area * ((b - 2.0 * v + u) / (hy * hy)).powi(2);
                    }
                }
                if i + 1 < rl && j + 1 < rows {
                    if let (Some(r), Some(u), Some(ru)) = (at(i + 1, j), at(i, j + 1), at(i + 1, j + 1)) {
                        sum += 2.0 * area * ((ru - r - u + v) / (hx * hy)).powi(2);
                    }
                }
            }
        }
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(n: usize) -> Arc<Grid2D> {
        Arc::new(Grid2D::new(DomainKind::Rectangle, 1.0, n).unwrap())
    }

    fn random_state(grid: &Arc<Grid2D>, params: GLParams, seed: u64) -> GLState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = ComplexField::from_fn(grid.clone(), |_| {
            Complex64::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8))
        });
        let f = symmetric_gauge(grid);
        let vals = f.values().iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
        let a = EdgeField::from_values(grid.clone(), vals).unwrap();
        GLState::new(psi, a, params).unwrap()
    }

    #[test]
    fn normal_state_energy_and_residual_vanish() {
        let g = Arc::new(Grid2D::new(DomainKind::Disk, 1.0, 33).unwrap());
        let s = GLState::normal(&g, GLParams::new(3.0, 2.0).unwrap()).unwrap();
        assert!(energy(&s).abs() < 1e-12);
        let r = residual(&s);
        assert_eq!(r.psi_inf(), 0.0);
        assert!(r.a_inf() < 1e-6);
        assert_eq!(r.b_psi.norm(Norm::Inf), 0.0);
        assert!(r.b_curl.norm(Norm::Inf) < 1e-8);
    }

    #[test]
    fn pure_field_energy() {
        let g = square(33);
        let p = GLParams::new(1.0, 1.0).unwrap();
        let a = symmetric_gauge(&g).scale(1.5);
        let s = GLState::new(ComplexField::zeros(g), a, p).unwrap();
        assert!((energy(&s) - 0.25).abs() < 1e-12);
    }

    /// Gauss-Legendre quadrature of `|F|^2` over the centred unit square.
    fn oracle_f_squared() -> f64 {
        let (x, w) = gauss_legendre(8);
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            for (yj, wj) in x.iter().zip(&w) {
                let (u, v) = (0.5 * xi, 0.5 * yj);
                s += 0.25 * wi * wj * 0.25 * (u * u + v * v);
            }
        }
        s
    }

    #[test]
    fn uniform_superconductor_energy() {
        let expected = oracle_f_squared() - 0.5;
        assert!((expected + 11.0 / 24.0).abs() < 1e-14);
        let p = GLParams::new(1.0, 1.0).unwrap();
        let errs: Vec<f64> = [33, 65]
            .iter()
            .map(|&n| {
                let g = square(n);
                let psi = ComplexField::constant(g.clone(), Complex64::new(1.0, 0.0));
                let s = GLState::new(psi, symmetric_gauge(&g), p).unwrap();
                (energy(&s) - expected).abs()
            })
            .collect();
        assert!(errs[0] < 2e-3, "{errs:?}");
        assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn constant_psi_residual_is_kinetic_density() {
        // p^2 1 = c^2 |F|^2 for divergence-free F; the oracle is the analytic
        // density, the lattice value is compared at interior nodes.
        let (kappa, sigma) = (2.0, 1.5);
        let p = GLParams::new(kappa, sigma).unwrap();
        let c = p.coupling();
        let mut errs = vec![];
        for n in [33, 65] {
            let g = square(n);
            let psi = ComplexField::constant(g.clone(), Complex64::new(1.0, 0.0));
            let s = GLState::new(psi, symmetric_gauge(&g), p).unwrap();
            let r = residual(&s);
            let mut err: f64 = 0.0;
            for k in 0..g.n_nodes() {
                if g.node_kind(k) == NodeKind::Interior {
                    let (i, j) = g.node_coords(k);
                    let x = g.node_position(i, j);
                    let exact = c * c * 0.25 * (x[0] * x[0] + x[1] * x[1]);
                    // The cubic term vanishes at |psi| = 1.
                    err = err.max((r.r_psi.values()[k] - exact).norm());
                }
            }
            errs.push(err);
        }
        assert!(errs[0] < 1e-2, "{errs:?}");
        let ratio = errs[0] / errs[1];
        assert!((ratio - 4.0).abs() < 1.0, "{errs:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = Arc::new(Grid2D::new(DomainKind::Disk, 1.0, 17).unwrap());
        let p = GLParams::new(3.0, 2.5).unwrap();
        let s = random_state(&g, p, 7);
        let (gp, ga) = energy_gradient(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let step = 1e-5;
        let e0 = energy(&s).abs();
        let mut checked = 0;
        while checked < 100 {
            let which = rng.gen_range(0..3);
            let mut plus = s.clone();
            let mut minus = s.clone();
            let analytic = match which {
                0 | 1 => {
                    let k = rng.gen_range(0..g.n_nodes());
                    if !g.is_active(k) {
                        continue;
                    }
                    let d = if which == 0 { Complex64::new(step, 0.0) } else { Complex64::new(0.0, step) };
                    plus.psi.values_mut()[k] += d;
                    minus.psi.values_mut()[k] -= d;
                    if which == 0 { gp.values()[k].re } else { gp.values()[k].im }
                }
                _ => {
                    let e = rng.gen_range(0..g.n_edges());
                    if g.edge_weight(e) == 0.0 {
                        continue;
                    }
                    plus.a.values_mut()[e] += step;
                    minus.a.values_mut()[e] -= step;
                    ga.values()[e]
                }
            };
            let fd = (energy(&plus) - energy(&minus)) / (2.0 * step);
            // Truncation is negligible; the floor is the cancellation error.
            let tol = 1e-6 * analytic.abs() + 1e-14 * e0 / step;
            assert!((fd - analytic).abs() <= tol, "kind {which}: fd {fd} vs {analytic}");
            checked += 1;
        }
    }

    #[test]
    fn energy_is_gauge_invariant() {
        let g = Arc::new(Grid2D::new(DomainKind::Disk, 1.0, 25).unwrap());
        let p = GLParams::new(4.0, 3.0).unwrap();
        let s = random_state(&g, p, 3);
        let eta = ScalarField::from_fn(g.clone(), |x| (2.0 * x[0]).sin() + x[0] * x[1] * x[1]);
        let (psi2, a2) = gauge::gauge_transform(&s.psi, &s.a, &eta, p.coupling()).unwrap();
        let t = GLState::new(psi2, a2, p).unwrap();
        let (e0, e1) = (energy(&s), energy(&t));
        assert!((e0 - e1).abs() <= 1e-12 * e0.abs(), "{e0} vs {e1}");
        let (g0p, g0a) = energy_gradient(&s);
        let (g1p, g1a) = energy_gradient(&t);
        let n0 = (g0p.norm(Norm::L2).powi(2) + g0a.norm(Norm::L2).powi(2)).sqrt();
        let n1 = (g1p.norm(Norm::L2).powi(2) + g1a.norm(Norm::L2).powi(2)).sqrt();
        assert!((n0 - n1).abs() <= 1e-8 * n0);
    }

    #[test]
    fn normal_state_diagnostics_vanish() {
        let g = Arc::new(Grid2D::new(DomainKind::Disk, 1.0, 25).unwrap());
        let s = GLState::normal(&g, GLParams::new(3.0, 3.0).unwrap()).unwrap();
        let d = apriori_diagnostics(&s, 1e-6).unwrap();
        assert!(d.lhs42 < 1e-8 && d.lhs46 < 1e-8);
        let noisy = random_state(&g, s.params, 1);
        assert!(matches!(apriori_diagnostics(&noisy, 1e-6), Err(Error::NotConverged(_))));
    }

    #[test]
    fn resolution_rule() {
        let p = GLParams::new(10.0, 10.0).unwrap();
        assert!((p.max_spacing() - 0.025).abs() < 1e-15);
        let coarse = Grid2D::new(DomainKind::Disk, 1.0, 32).unwrap();
        let fine = Grid2D::new(DomainKind::Disk, 1.0, 96).unwrap();
        assert!(!p.resolved_by(&coarse));
        assert!(p.resolved_by(&fine));
    }
}
