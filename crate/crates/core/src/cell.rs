//! The whole-plane problem `p_F^2 u = b (1 - |u|^2) u` on a magnetically
//! periodic cell.
//!
//! A cell `[0, Lx) x [0, Ly)` with `Lx Ly = 2 pi N` carries `N` flux quanta of
//! the unit field `F = (-x_2 / 2, x_1 / 2)`. Solutions obey
//!
//! ```text
//! u(x + Lx e_1) = exp(-(i/2) Lx x_2) u(x),   u(x + Ly e_2) = exp((i/2) Ly x_1) u(x),
//! ```
//!
//! which is built into the link variables crossing the seams. The discrete
//! operator's lowest eigenvalue sits an `O(h^2)` distance below 1; a constant
//! shift removes that gap so the normal state loses stability exactly at
//! `b = 1`.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::cg::{self, CgOptions};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::Grid2D;
use crate::minimize::{self, InitKind, Objective, SolveOptions};

pub const DEFAULT_FLUX: u32 = 2;
/// `Ly / Lx` of a rectangle holding two vortices of a triangular lattice.
pub const DEFAULT_ASPECT: f64 = 1.732_050_807_568_877_2;
/// Residual tolerance at which a collapsing state is within `1e-3` of zero.
pub const CELL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct MagneticCell {
    flux_quanta: u32,
    aspect: f64,
    lx: f64,
    ly: f64,
    grid: Arc<Grid2D>,
    /// Parallel transporter on each edge, tail to head, seams included.
    links: Vec<Complex64>,
    lowest_eigenvalue: f64,
}

/// Builds the cell with `n` nodes along `x` and about `n * aspect` along `y`.
pub fn make_cell(flux_quanta: u32, aspect: f64, n: usize) -> Result<MagneticCell> {
    if flux_quanta == 0 {
        return Err(Error::InvalidArgument("a cell needs at least one flux quantum".into()));
    }
    if !(aspect.is_finite() && aspect > 0.0) {
        return Err(Error::InvalidArgument(format!("aspect must be positive, got {aspect}")));
    }
    let lx = (2.0 * PI * flux_quanta as f64 / aspect).sqrt();
    let ly = aspect * lx;
    let ny = ((n as f64) * aspect).round() as usize;
    if n < 4 || ny < 4 {
        return Err(Error::InvalidArgument(format!("cell grid {n} x {ny} is too small")));
    }
    if lx / n as f64 > 0.25 || ly / ny as f64 > 0.25 {
        return Err(Error::InvalidArgument(format!(
            "spacing {:.3} does not resolve the magnetic length (need h <= 1/4)",
            (lx / n as f64).max(ly / ny as f64)
        )));
    }
    let grid = Arc::new(Grid2D::periodic(lx, ly, n, ny)?);
    let links = build_links(&grid, lx, ly);
    let mut cell = MagneticCell { flux_quanta, aspect, lx, ly, grid, links, lowest_eigenvalue: 1.0 };
    cell.lowest_eigenvalue = cell.estimate_lowest_eigenvalue()?;
    Ok(cell)
}

fn build_links(grid: &Grid2D, lx: f64, ly: f64) -> Vec<Complex64> {
    let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
    let mut links = vec![Complex64::new(0.0, 0.0); grid.n_edges()];
    for j in 0..ny {
        for i in 0..nx {
            let [x, y] = grid.node_position(i, j);
            let seam_x = if i + 1 == nx { 0.5 * lx * y } else { 0.0 };
            links[grid.hedge_index(i, j)] = Complex64::from_polar(1.0, 0.5 * y * hx + seam_x);
            let seam_y = if j + 1 == ny { -0.5 * ly * x } else { 0.0 };
            links[grid.vedge_index(i, j)] = Complex64::from_polar(1.0, -0.5 * x * hy + seam_y);
        }
    }
    links
}

impl MagneticCell {
    pub fn flux_quanta(&self) -> u32 {
        self.flux_quanta
    }
    pub fn aspect(&self) -> f64 {
        self.aspect
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }
    pub fn links(&self) -> &[Complex64] {
        &self.links
    }

    /// Lowest eigenvalue of the unshifted discrete `p_F^2`.
    pub fn lowest_eigenvalue(&self) -> f64 {
        self.lowest_eigenvalue
    }

    /// Constant added to the discrete operator so its lowest eigenvalue is 1.
    pub fn threshold_shift(&self) -> f64 {
        1.0 - self.lowest_eigenvalue
    }

    fn edge(&self, e: usize) -> (usize, usize, f64) {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let nh = g.n_hedges();
        if e < nh {
            let (i, j) = (e % nx, e / nx);
            (e, j * nx + (i + 1) % nx, g.hx())
        } else {
            let k = e - nh;
            let (i, j) = (k % nx, k / nx);
            (k, ((j + 1) % ny) * nx + i, g.hy())
        }
    }

    /// Holonomy phases `arg` of the transporters around each plaquette,
    /// counterclockwise, reported as enclosed flux.
    pub fn plaquette_fluxes(&self) -> Vec<f64> {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let mut out = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (ip, jp) = ((i + 1) % nx, (j + 1) % ny);
                let loop_ = self.links[g.hedge_index(i, j)]
                    * self.links[g.vedge_index(ip, j)]
                    * self.links[g.hedge_index(i, jp)].conj()
                    * self.links[g.vedge_index(i, j)].conj();
                out.push(-loop_.arg());
            }
        }
        out
    }

    /// Largest deviation of a plaquette holonomy from `exp(-i h_x h_y)`, and of
    /// the product of all holonomies from 1.
    pub fn cocycle_defect(&self) -> f64 {
        let target = Complex64::from_polar(1.0, -self.grid.hx() * self.grid.hy());
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let mut worst: f64 = 0.0;
        let mut product = Complex64::new(1.0, 0.0);
        for j in 0..ny {
            for i in 0..nx {
                let (ip, jp) = ((i + 1) % nx, (j + 1) % ny);
                let h = self.links[g.hedge_index(i, j)]
                    * self.links[g.vedge_index(ip, j)]
                    * self.links[g.hedge_index(i, jp)].conj()
                    * self.links[g.vedge_index(i, j)].conj();
                worst = worst.max((h - target).norm());
                product *= h;
            }
        }
        worst.max((product - 1.0).norm())
    }

    /// Discrete `p_F^2 u`, without the threshold shift.
    pub fn apply_kinetic(&self, u: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (e, &link) in self.links.iter().enumerate() {
            let (t, h, len) = self.edge(e);
            let d = (u[h] - link * u[t]) / (len * len);
            out[h] += d;
            out[t] -= link.conj() * d;
        }
    }

    fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        let u: Vec<Complex64> = x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); u.len()];
        self.apply_kinetic(&u, &mut out);
        for (k, v) in out.iter().enumerate() {
            y[2 * k] = v.re;
            y[2 * k + 1] = v.im;
        }
    }

    /// Block inverse iteration with Rayleigh-Ritz on `N + 2` vectors, which
    /// spans the nearly degenerate lowest level.
    fn estimate_lowest_eigenvalue(&self) -> Result<f64> {
        let n = self.grid.n_nodes();
        let m = self.flux_quanta as usize + 2;
        let diag = vec![2.0 / self.grid.hx().powi(2) + 2.0 / self.grid.hy().powi(2); 2 * n];
        let mut basis: Vec<Vec<Complex64>> = (0..m)
            .map(|s| minimize::initial_psi(&self.grid, InitKind::RandomComplex { seed: 1000 + s as u64, amplitude: 1.0 }).into_values())
            .collect();
        let mut last = f64::INFINITY;
        for _ in 0..60 {
            let mut next = Vec::with_capacity(m);
            for v in &basis {
                let b: Vec<f64> = v.iter().flat_map(|z| [z.re, z.im]).collect();
                let mut x = b.clone();
                let opts = CgOptions { rel_tol: 1e-13, abs_tol: 0.0, max_iter: 20 * n };
                cg::solve(|x, y| self.apply_real(x, y), &diag, &b, &mut x, opts, "cell eigenvalue")?;
                next.push(x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect::<Vec<_>>());
            }
            orthonormalize(&mut next);
            let (values, rotated) = self.ritz(&next);
            basis = rotated;
            let lowest = values[0];
            if (lowest - last).abs() <= 1e-14 * lowest.abs() {
                return Ok(lowest);
            }
            last = lowest;
        }
        Ok(last)
    }

    fn ritz(&self, basis: &[Vec<Complex64>]) -> (Vec<f64>, Vec<Vec<Complex64>>) {
        let m = basis.len();
        let n = basis[0].len();
        let mut hv = vec![Complex64::new(0.0, 0.0); n];
        let mut h = DMatrix::<Complex64>::zeros(m, m);
        for (b, v) in basis.iter().enumerate() {
            self.apply_kinetic(v, &mut hv);
            for (a, w) in basis.iter().enumerate() {
                h[(a, b)] = w.iter().zip(&hv).map(|(x, y)| x.conj() * y).sum();
            }
        }
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let rotated = order
            .iter()
            .map(|&k| {
                let mut out = vec![Complex64::new(0.0, 0.0); n];
                for (a, v) in basis.iter().enumerate() {
                    let c = eig.eigenvectors[(a, k)];
                    out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
                }
                out
            })
            .collect();
        (values, rotated)
    }

    /// Value at integer node coordinates outside the fundamental cell, from
    /// the quasi-periodicity conditions.
    fn value_at(&self, u: &[Complex64], i: isize, j: isize) -> Complex64 {
        let (nx, ny) = (self.grid.nx() as isize, self.grid.ny() as isize);
        let (hx, hy) = (self.grid.hx(), self.grid.hy());
        let (q, jr) = (j.div_euclid(ny), j.rem_euclid(ny));
        let (p, ir) = (i.div_euclid(nx), i.rem_euclid(nx));
        let x1 = i as f64 * hx;
        let y1 = jr as f64 * hy;
        let phase = 0.5 * q as f64 * self.ly * x1 - 0.5 * p as f64 * self.lx * y1;
        u[(jr * nx + ir) as usize] * Complex64::from_polar(1.0, phase)
    }

    /// Magnetic translation by `(a h_x, b h_y)`. Only translations that
    /// commute with the cell periods map the solution space to itself, so
    /// `a N` must be a multiple of `n_x` and `b N` of `n_y`.
    pub fn translate(&self, u: &ComplexField, a: isize, b: isize) -> Result<ComplexField> {
        let g = &self.grid;
        let (nx, ny, n) = (g.nx() as isize, g.ny() as isize, self.flux_quanta as isize);
        if (a * n) % nx != 0 || (b * n) % ny != 0 {
            return Err(Error::InvalidArgument(format!(
                "translation ({a}, {b}) does not commute with the cell periods"
            )));
        }
        let t = [a as f64 * g.hx(), b as f64 * g.hy()];
        let values = (0..g.n_nodes())
            .map(|k| {
                let (i, j) = g.node_coords(k);
                let x = g.node_position(i, j);
                let phase = 0.5 * (t[0] * x[1] - t[1] * x[0]);
                self.value_at(u.values(), i as isize + a, j as isize + b) * Complex64::from_polar(1.0, phase)
            })
            .collect();
        ComplexField::from_values(g.clone(), values)
    }

    /// Energy `sum_e |u_h - U_e u_t|^2 / l_e^2 + sum_n ((s - b)|u|^2 + b/2 |u|^4)`,
    /// all terms weighted by the cell area `h_x h_y`.
    pub fn energy(&self, b: f64, u: &ComplexField) -> f64 {
        let mut g = vec![Complex64::new(0.0, 0.0); u.values().len()];
        self.energy_and_gradient(b, u.values(), &mut g)
    }

    fn energy_and_gradient(&self, b: f64, u: &[Complex64], g: &mut [Complex64]) -> f64 {
        let w = self.grid.hx() * self.grid.hy();
        let s = self.threshold_shift();
        let mut e = 0.0;
        for (gv, z) in g.iter_mut().zip(u) {
            let m = z.norm_sqr();
            e += w * ((s - b) * m + 0.5 * b * m * m);
            *gv = 2.0 * w * (s - b + b * m) * z;
        }
        for (edge, &link) in self.links.iter().enumerate() {
            let (t, h, len) = self.edge(edge);
            let c = w / (len * len);
            let d = u[h] - link * u[t];
            e += c * d.norm_sqr();
            g[h] += 2.0 * c * d;
            g[t] -= 2.0 * c * link.conj() * d;
        }
        e
    }

    /// `|p_F^2 u + s u - b (1 - |u|^2) u|_inf / max(b, 1)`.
    pub fn residual(&self, b: f64, u: &ComplexField) -> f64 {
        let mut g = vec![Complex64::new(0.0, 0.0); u.values().len()];
        self.energy_and_gradient(b, u.values(), &mut g);
        let w = self.grid.hx() * self.grid.hy();
        g.iter().fold(0.0f64, |m, v| m.max(v.norm())) / (2.0 * w * b.max(1.0))
    }
}

fn orthonormalize(vs: &mut [Vec<Complex64>]) {
    for k in 0..vs.len() {
        for _ in 0..2 {
            for j in 0..k {
                let (done, rest) = vs.split_at_mut(k);
                let c: Complex64 = done[j].iter().zip(&rest[0]).map(|(a, b)| a.conj() * b).sum();
                rest[0].iter_mut().zip(&done[j]).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = vs[k].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        vs[k].iter_mut().for_each(|z| *z /= norm);
    }
}

struct CellProblem<'a> {
    cell: &'a MagneticCell,
    b: f64,
    u: Vec<Complex64>,
    g: Vec<Complex64>,
    precond: f64,
    residual: f64,
}

impl Objective for CellProblem<'_> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        for (k, z) in self.u.iter_mut().enumerate() {
            *z = Complex64::new(x[2 * k], x[2 * k + 1]);
        }
        let e = self.cell.energy_and_gradient(self.b, &self.u, &mut self.g);
        let w = self.cell.grid.hx() * self.cell.grid.hy();
        let mut worst: f64 = 0.0;
        for (k, v) in self.g.iter().enumerate() {
            g[2 * k] = v.re;
            g[2 * k + 1] = v.im;
            worst = worst.max(v.norm());
        }
        self.residual = worst / (2.0 * w * self.b.max(1.0));
        e
    }
    fn precondition(&mut self, v: &mut [f64]) {
        v.iter_mut().for_each(|x| *x *= self.precond);
    }
    fn residual(&self) -> f64 {
        self.residual
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CellReport {
    pub iterations: usize,
    pub energy: f64,
    pub residual_inf: f64,
    pub converged: bool,
    pub sup_norm: f64,
}

/// Solves from the initial state selected in `opts`.
pub fn solve_cell(cell: &MagneticCell, b: f64, opts: &SolveOptions) -> Result<(ComplexField, CellReport)> {
    let u0 = minimize::initial_psi(&cell.grid, opts.init);
    solve_cell_from(cell, b, &u0, opts)
}

/// Solves from a given state on the cell grid.
pub fn solve_cell_from(
    cell: &MagneticCell,
    b: f64,
    u0: &ComplexField,
    opts: &SolveOptions,
) -> Result<(ComplexField, CellReport)> {
    opts.validate()?;
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::InvalidArgument(format!("b must be positive, got {b}")));
    }
    if u0.values().len() != cell.grid.n_nodes() {
        return Err(Error::InvalidArgument("initial state lives on a different grid".into()));
    }
    let g = &cell.grid;
    let w = g.hx() * g.hy();
    let diag = 2.0 * w * (2.0 / g.hx().powi(2) + 2.0 / g.hy().powi(2) + 1.0 + b);
    let mut prob = CellProblem {
        cell,
        b,
        u: vec![Complex64::new(0.0, 0.0); g.n_nodes()],
        g: vec![Complex64::new(0.0, 0.0); g.n_nodes()],
        precond: 1.0 / diag,
        residual: f64::INFINITY,
    };
    let mut x: Vec<f64> = u0.values().iter().flat_map(|z| [z.re, z.im]).collect();
    let run = minimize::lbfgs(&mut prob, &mut x, opts, |_, _| Ok(()))?;
    let u = ComplexField::from_values(g.clone(), x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())?;
    let residual_inf = cell.residual(b, &u);
    let report = CellReport {
        iterations: run.iterations,
        energy: cell.energy(b, &u),
        residual_inf,
        converged: residual_inf <= opts.tol_residual,
        sup_norm: u.sup_norm(),
    };
    Ok((u, report))
}

/// One row of the `M(b)` curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub b: f64,
    #[serde(rename = "N")]
    pub flux_quanta: u32,
    pub aspect: f64,
    pub n: usize,
    pub seed: u64,
    pub sup_norm: f64,
    pub energy: f64,
    pub residual_inf: f64,
    pub converged: bool,
}

/// Sup norms along an increasing list of `b`. Each point is solved twice,
/// warm-started from the previous point and from the fresh initial state of
/// `opts`; the larger converged sup norm is kept.
pub fn sup_norm_curve(cell: &MagneticCell, b_list: &[f64], opts: &SolveOptions) -> Result<Vec<CurvePoint>> {
    if b_list.is_empty() {
        return Err(Error::EmptySweep);
    }
    if b_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("b values must be strictly increasing".into()));
    }
    let seed = match opts.init {
        InitKind::RandomComplex { seed, .. } => seed,
        _ => 0,
    };
    let mut previous: Option<ComplexField> = None;
    let mut out = Vec::with_capacity(b_list.len());
    for &b in b_list {
        let mut candidates = vec![solve_cell(cell, b, opts)?];
        if let Some(u0) = &previous {
            candidates.push(solve_cell_from(cell, b, u0, opts)?);
        }
        let any_converged = candidates.iter().any(|c| c.1.converged);
        let (u, report) = candidates
            .into_iter()
            .filter(|c| c.1.converged || !any_converged)
            .max_by(|a, b| a.1.sup_norm.total_cmp(&b.1.sup_norm))
            .expect("at least one candidate");
        out.push(CurvePoint {
            b,
            flux_quanta: cell.flux_quanta,
            aspect: cell.aspect,
            n: cell.grid.nx(),
            seed,
            sup_norm: report.sup_norm,
            energy: report.energy,
            residual_inf: report.residual_inf,
            converged: report.converged,
        });
        previous = Some(u);
    }
    Ok(out)
}

/// `max |u|_inf / sqrt(b - 1)` over converged points with `1 < b <= 1.5`.
pub fn c_max(points: &[CurvePoint]) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.converged && p.b > 1.0 && p.b <= 1.5)
        .map(|p| p.sup_norm / (p.b - 1.0).sqrt())
        .reduce(f64::max)
}

pub fn write_curve_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    crate::output::write_csv(path, points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(seed: u64) -> SolveOptions {
        SolveOptions {
            tol_residual: CELL_TOL,
            init: InitKind::RandomComplex { seed, amplitude: 0.3 },
            ..SolveOptions::default()
        }
    }

    #[test]
    fn dimensions_and_flux() {
        let c = make_cell(2, 1.0, 16).unwrap();
        assert!((c.lx() - 2.0 * PI.sqrt()).abs() < 1e-14);
        assert!((c.ly() - c.lx()).abs() < 1e-14);
        let c = make_cell(1, 0.75f64.sqrt(), 16).unwrap();
        assert!((c.lx() * c.ly() - 2.0 * PI).abs() < 1e-12);
        let total: f64 = c.plaquette_fluxes().iter().sum();
        assert!((total - 2.0 * PI).abs() < 1e-12, "{total}");
        assert!(c.cocycle_defect() < 1e-12);
    }

    #[test]
    fn cocycle_holds_for_odd_shapes() {
        for (n_flux, aspect, n) in [(3, 0.7, 23), (5, 2.3, 17), (2, DEFAULT_ASPECT, 15)] {
            let c = make_cell(n_flux, aspect, n).unwrap();
            assert!(c.cocycle_defect() < 1e-12, "{n_flux} {aspect}");
            let total: f64 = c.plaquette_fluxes().iter().sum();
            assert!((total - 2.0 * PI * n_flux as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_cells() {
        assert!(make_cell(0, 1.0, 16).is_err());
        assert!(make_cell(2, 1.0, 8).is_err());
        assert!(make_cell(2, -1.0, 16).is_err());
    }

    #[test]
    fn kinetic_operator_is_hermitian_and_positive() {
        let c = make_cell(2, 1.0, 16).unwrap();
        let u = minimize::initial_psi(c.grid(), InitKind::RandomComplex { seed: 1, amplitude: 1.0 });
        let v = minimize::initial_psi(c.grid(), InitKind::RandomComplex { seed: 2, amplitude: 1.0 });
        let mut hu = vec![Complex64::new(0.0, 0.0); u.values().len()];
        let mut hv = hu.clone();
        c.apply_kinetic(u.values(), &mut hu);
        c.apply_kinetic(v.values(), &mut hv);
        let a: Complex64 = v.values().iter().zip(&hu).map(|(x, y)| x.conj() * y).sum();
        let b: Complex64 = hv.iter().zip(u.values()).map(|(x, y)| x.conj() * y).sum();
        assert!((a - b).norm() < 1e-10 * a.norm());
        let q: Complex64 = u.values().iter().zip(&hu).map(|(x, y)| x.conj() * y).sum();
        let nn: f64 = u.values().iter().map(|z| z.norm_sqr()).sum();
        assert!(q.re / nn >= c.lowest_eigenvalue() - 1e-9);
    }

    #[test]
    fn lowest_eigenvalue_near_one() {
        for n in [12, 24] {
            let c = make_cell(2, DEFAULT_ASPECT, n).unwrap();
            assert!((c.lowest_eigenvalue() - 1.0).abs() < 0.02, "{}", c.lowest_eigenvalue());
        }
        // Second order in h.
        let e1 = 1.0 - make_cell(2, 1.0, 16).unwrap().lowest_eigenvalue();
        let e2 = 1.0 - make_cell(2, 1.0, 32).unwrap().lowest_eigenvalue();
        assert!(e1 > 0.0 && (e1 / e2 - 4.0).abs() < 0.5, "{e1} {e2}");
    }

    #[test]
    fn zero_is_an_exact_solution() {
        let c = make_cell(2, DEFAULT_ASPECT, 12).unwrap();
        let zero = ComplexField::zeros(c.grid().clone());
        for b in [0.5, 1.0, 1.7] {
            assert_eq!(c.residual(b, &zero), 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let c = make_cell(2, 1.0, 16).unwrap();
        let u = minimize::initial_psi(c.grid(), InitKind::RandomComplex { seed: 3, amplitude: 0.8 });
        let b = 1.3;
        let mut g = vec![Complex64::new(0.0, 0.0); u.values().len()];
        c.energy_and_gradient(b, u.values(), &mut g);
        let step = 1e-6;
        for k in [0, 7, 50, 143] {
            for (dir, comp) in [(Complex64::new(step, 0.0), g[k].re), (Complex64::new(0.0, step), g[k].im)] {
                let mut p = u.clone();
                p.values_mut()[k] += dir;
                let mut m = u.clone();
                m.values_mut()[k] -= dir;
                let fd = (c.energy(b, &p) - c.energy(b, &m)) / (2.0 * step);
                assert!((fd - comp).abs() < 1e-6 * comp.abs().max(1.0), "{k}: {fd} vs {comp}");
            }
        }
    }

    #[test]
    fn subcritical_and_critical_states_collapse() {
        let c = make_cell(2, DEFAULT_ASPECT, 16).unwrap();
        for (b, seed) in [(0.5, 0), (1.0, 1)] {
            let (u, report) = solve_cell(&c, b, &opts(seed)).unwrap();
            assert!(report.converged, "{report:?}");
            assert!(u.sup_norm() <= 1e-3, "b = {b}: {}", u.sup_norm());
        }
    }

    #[test]
    fn supercritical_state_is_nontrivial_and_bounded() {
        let c = make_cell(2, DEFAULT_ASPECT, 16).unwrap();
        let (u, report) = solve_cell(&c, 1.5, &opts(4)).unwrap();
        assert!(report.converged);
        let sup = u.sup_norm();
        let h = c.grid().h();
        assert!(sup > 0.1 && sup <= 1.0 + 10.0 * h * h, "{sup}");
        assert!(report.energy < 0.0);
    }

    #[test]
    fn translations_map_solutions_to_solutions() {
        let c = make_cell(2, DEFAULT_ASPECT, 16).unwrap();
        let (u, report) = solve_cell(&c, 1.3, &opts(5)).unwrap();
        let nx = c.grid().nx() as isize;
        let ny = c.grid().ny() as isize;
        for (a, b) in [(nx / 2, 0), (0, ny / 2), (nx, -ny), (nx / 2, 3 * ny / 2)] {
            let t = c.translate(&u, a, b).unwrap();
            let r = c.residual(1.3, &t);
            assert!(r <= 2.0 * report.residual_inf + 1e-13, "({a}, {b}): {r}");
            assert!((t.sup_norm() - u.sup_norm()).abs() < 1e-12);
        }
        // Whole periods act trivially.
        let t = c.translate(&u, nx, ny).unwrap();
        assert!(t.sub(&u).sup_norm() < 1e-12);
        assert!(c.translate(&u, 1, 0).is_err());
    }

    #[test]
    fn curve_is_validated_and_written() {
        let c = make_cell(2, DEFAULT_ASPECT, 12).unwrap();
        assert!(matches!(sup_norm_curve(&c, &[], &opts(0)), Err(Error::EmptySweep)));
        assert!(sup_norm_curve(&c, &[1.2, 1.1], &opts(0)).is_err());
        let pts = sup_norm_curve(&c, &[0.8, 1.0, 1.2], &opts(0)).unwrap();
        assert!(pts[0].sup_norm <= 1e-3 && pts[1].sup_norm <= 1e-3);
        assert!(pts[2].sup_norm > 0.1);
        assert!(c_max(&pts).unwrap() < 5.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        write_curve_csv(&path, &pts).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("b,N,aspect,n,seed,sup_norm,energy,residual_inf,converged\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
