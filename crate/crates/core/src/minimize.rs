//! Energy minimization with a certified stationarity test.
//!
//! The unknowns are the node values of `psi` and the edge values of `A`.
//! Descent uses limited-memory BFGS whose initial inverse Hessian is the
//! diagonal of the lattice energy's Hessian at `|psi| = 1`. Step lengths come
//! from a line search on the directional derivative, which stays reliable when
//! energy differences sink below rounding. The gauge is pinned to Coulomb at
//! the start and once more before returning; the energy is gauge invariant so
//! the descent itself never needs it.

use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, EdgeField};
use crate::gauge;
use crate::gl::{self, GLParams, GLState};
use crate::grid::{DomainKind, Grid2D};

/// Initial order parameter. The potential always starts at the reference
/// field `F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum InitKind {
    Normal,
    Uniform { value: f64 },
    RandomComplex { seed: u64, amplitude: f64 },
}

impl Default for InitKind {
    fn default() -> Self {
        InitKind::RandomComplex { seed: 0, amplitude: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct StepControl {
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// Strong-Wolfe curvature constant.
    pub curvature: f64,
    /// Energy slack, relative to `|E|`, below which decrease is judged by
    /// the derivative alone.
    pub energy_noise: f64,
    pub max_line_search: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { memory: 20, armijo: 1e-4, curvature: 0.9, energy_noise: 1e-12, max_line_search: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct SolveOptions {
    pub tol_residual: f64,
    pub max_iter: usize,
    pub init: InitKind,
    pub step_control: StepControl,
    /// Spacing of energy-trace entries (and checkpoints, when enabled).
    pub record_every: usize,
    /// Directory for periodic field dumps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
    /// Solve on coarser grids first and interpolate upwards.
    pub continuation: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_residual: 1e-6,
            max_iter: 200_000,
            init: InitKind::default(),
            step_control: StepControl::default(),
            record_every: 100,
            checkpoint_dir: None,
            continuation: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::InvalidArgument("tolResidual must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("maxIter must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("recordEvery must be at least 1".into()));
        }
        let s = &self.step_control;
        if s.memory == 0 || !(0.0 < s.armijo && s.armijo < s.curvature && s.curvature < 1.0) {
            return Err(Error::InvalidArgument("invalid step control".into()));
        }
        Ok(())
    }

    pub fn with_init(mut self, init: InitKind) -> Self {
        self.init = init;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveReport {
    pub iterations: usize,
    pub final_energy: f64,
    /// `max(|r_psi|_inf / kappa^2, |r_A|_inf)` as computed by [`gl::residual`].
    pub final_residual_inf: f64,
    pub converged: bool,
    pub energy_trace: Vec<(usize, f64)>,
    /// Set by [`polish`] when the input state was returned untouched.
    pub no_progress: bool,
    /// Whether the grid resolves the magnetic length.
    pub resolved: bool,
}

/// Minimizes the energy from the initial state selected in `opts`.
pub fn minimize(grid: &Arc<Grid2D>, params: GLParams, opts: &SolveOptions) -> Result<(GLState, SolveReport)> {
    opts.validate()?;
    let mut levels = vec![grid.clone()];
    if opts.continuation {
        while let Some(c) = coarsen(levels.last().expect("non-empty"), &params) {
            levels.push(Arc::new(c));
        }
    }
    let coarsest = levels.pop().expect("non-empty");
    let a = gauge::build_f(&coarsest)?;
    let psi = initial_psi(&coarsest, opts.init);
    let mut state = GLState::new(psi, a, params)?;
    let mut spent = 0;
    while let Some(fine) = levels.pop() {
        let coarse_opts = SolveOptions {
            checkpoint_dir: None,
            tol_residual: opts.tol_residual.max(COARSE_TOL),
            ..opts.clone()
        };
        let (coarse, report) = descend(state, &coarse_opts)?;
        spent += report.iterations;
        state = prolong(&coarse, &fine)?;
    }
    let (state, mut report) = descend(state, opts)?;
    report.iterations += spent;
    Ok((state, report))
}

/// Tolerance on intermediate grids; their solutions only seed the next level.
const COARSE_TOL: f64 = 1e-4;

/// The next coarser grid of the same shape, if it still resolves half the
/// magnetic length.
fn coarsen(grid: &Grid2D, params: &GLParams) -> Option<Grid2D> {
    let (nx, ny) = ((grid.nx() + 1) / 2, (grid.ny() + 1) / 2);
    if nx.min(ny) < 17 {
        return None;
    }
    let lx = (grid.nx() - 1) as f64 * grid.hx();
    let ly = (grid.ny() - 1) as f64 * grid.hy();
    let coarse = match grid.kind() {
        DomainKind::Disk => Grid2D::disk(0.5 * lx, nx),
        DomainKind::Rectangle => Grid2D::rectangle(lx, ly, nx, ny),
        DomainKind::Periodic => return None,
    }
    .ok()?;
    (coarse.h() <= 2.0 * params.max_spacing()).then_some(coarse)
}

/// Interpolates a state onto a finer grid of the same domain. The potential
/// is carried as its deviation from the reference field of each grid.
pub fn prolong(state: &GLState, fine: &Arc<Grid2D>) -> Result<GLState> {
    let coarse_dev = state.a.sub(&gauge::build_f(state.grid())?);
    let psi = ComplexField::from_fn(fine.clone(), |x| state.psi.sample(x));
    let dev = EdgeField::from_fn(fine.clone(), |x| coarse_dev.sample(x));
    GLState::new(psi, gauge::build_f(fine)?.add(&dev), state.params)
}

pub fn initial_psi(grid: &Arc<Grid2D>, init: InitKind) -> ComplexField {
    let active = |k: usize| grid.is_active(k);
    let values = match init {
        InitKind::Normal => vec![Complex64::new(0.0, 0.0); grid.n_nodes()],
        InitKind::Uniform { value } => (0..grid.n_nodes())
            .map(|k| if active(k) { Complex64::new(value, 0.0) } else { Complex64::new(0.0, 0.0) })
            .collect(),
        InitKind::RandomComplex { seed, amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..grid.n_nodes())
                .map(|k| {
                    let z = Complex64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)) * amplitude;
                    if active(k) { z } else { Complex64::new(0.0, 0.0) }
                })
                .collect()
        }
    };
    ComplexField::from_values(grid.clone(), values).expect("node count")
}

/// Continues descent from an arbitrary state. A state that already meets
/// the tolerance, or one the descent cannot improve, comes back unchanged
/// with `no_progress` set.
pub fn polish(state: &GLState, opts: &SolveOptions) -> Result<(GLState, SolveReport)> {
    opts.validate()?;
    let before = gl::residual(state).scaled_inf(&state.params);
    let unchanged = |state: &GLState| SolveReport {
        iterations: 0,
        final_energy: gl::energy(state),
        final_residual_inf: before,
        converged: before <= opts.tol_residual,
        energy_trace: vec![(0, gl::energy(state))],
        no_progress: true,
        resolved: state.params.resolved_by(state.grid()),
    };
    if before <= opts.tol_residual {
        return Ok((state.clone(), unchanged(state)));
    }
    let (out, report) = descend(state.clone(), opts)?;
    if report.final_residual_inf < before {
        Ok((out, report))
    } else {
        Ok((state.clone(), unchanged(state)))
    }
}

/// Packed layout: `[Re psi_0, Im psi_0, ..., A_0, A_1, ...]`.
struct Problem<'a> {
    grid: &'a Grid2D,
    params: GLParams,
    n_nodes: usize,
    psi: Vec<Complex64>,
    gpsi: Vec<Complex64>,
    ga: Vec<f64>,
    inv_node: Vec<f64>,
    inv_edge: Vec<f64>,
    /// Inverse Hessian diagonal at `|psi| = 1`.
    precond: Vec<f64>,
    /// Gradient of the physical energy alone, packed like `x`.
    physical: Vec<f64>,
    div: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(grid: &'a Grid2D, params: GLParams) -> Self {
        let n = grid.n_nodes();
        let ne = grid.n_edges();
        let c = params.coupling();
        let k2 = params.kappa * params.kappa;
        let inv = |w: f64, s: f64| if w > 0.0 { 1.0 / (s * w) } else { 0.0 };
        let inv_node: Vec<f64> = grid.node_weights().iter().map(|&w| inv(w, 2.0)).collect();
        let inv_edge: Vec<f64> = (0..ne).map(|e| inv(grid.edge_weight(e), 2.0 * c * c)).collect();

        // Diagonal of the Hessian with |psi| = 1.
        let mut dpsi = vec![0.0; n];
        let mut da = vec![0.0; ne];
        let (nx, hx, hy) = (grid.nx(), grid.hx(), grid.hy());
        let nh = grid.n_hedges();
        for e in 0..ne {
            let w = grid.edge_weight(e);
            if w == 0.0 {
                continue;
            }
            let (t, h, len) = if e < nh {
                let t = (e / (nx - 1)) * nx + e % (nx - 1);
                (t, t + 1, hx)
            } else {
                (e - nh, e - nh + nx, hy)
            };
            dpsi[t] += 2.0 * w / (len * len);
            dpsi[h] += 2.0 * w / (len * len);
            da[e] += 2.0 * w * c * c;
            // Gauge penalty, see `Problem::eval`.
            for node in [t, h] {
                let wn = grid.node_weights()[node];
                if wn > 0.0 {
                    da[e] += 2.0 * c * c * w * w / (wn * len * len);
                }
            }
        }
        let row = nx - 1;
        for (p, &w) in grid.plaquette_weights().iter().enumerate() {
            if w > 0.0 {
                let (i, j) = (p % row, p / row);
                let b = j * row + i;
                let l = nh + j * nx + i;
                for (e, len) in [(b, hy), (b + row, hy), (l, hx), (l + 1, hx)] {
                    da[e] += 2.0 * c * c * w / (len * len);
                }
            }
        }
        let mut diag = Vec::with_capacity(2 * n + ne);
        for (k, d) in dpsi.iter().enumerate() {
            let d = if grid.node_weights()[k] > 0.0 { d + 2.0 * k2 * grid.node_weights()[k] } else { 0.0 };
            diag.push(d);
            diag.push(d);
        }
        diag.extend(da);
        let precond = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
        Problem {
            grid,
            params,
            n_nodes: n,
            psi: vec![Complex64::new(0.0, 0.0); n],
            gpsi: vec![Complex64::new(0.0, 0.0); n],
            ga: vec![0.0; ne],
            inv_node,
            inv_edge,
            precond,
            physical: vec![0.0; 2 * n + ne],
            div: vec![0.0; n],
        }
    }

}

impl Objective for Problem<'_> {
    fn precondition(&mut self, v: &mut [f64]) {
        v.iter_mut().zip(&self.precond).for_each(|(x, m)| *x *= m);
    }

    fn residual(&self) -> f64 {
        self.scaled_residual(&self.physical)
    }

    /// Energy plus the gauge penalty `(kappa sigma)^2 |div A|^2`, with its
    /// gradient in `g`. The penalty vanishes exactly on the Coulomb slice,
    /// which every gauge orbit meets, so stationary points are unchanged; it
    /// gives the longitudinal part of `A` the same stiffness as the rest.
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        let n = self.n_nodes;
        for (k, p) in self.psi.iter_mut().enumerate() {
            *p = Complex64::new(x[2 * k], x[2 * k + 1]);
        }
        let a = &x[2 * n..];
        let e = gl::energy_and_gradient(self.grid, &self.params, &self.psi, a, &mut self.gpsi, &mut self.ga);
        for (k, gp) in self.gpsi.iter().enumerate() {
            g[2 * k] = gp.re;
            g[2 * k + 1] = gp.im;
        }
        g[2 * n..].copy_from_slice(&self.ga);
        self.physical.copy_from_slice(g);

        let grid = self.grid;
        let (nx, hx, hy) = (grid.nx(), grid.hx(), grid.hy());
        let nh = grid.n_hedges();
        let ends = |e: usize| {
            if e < nh {
                let t = (e / (nx - 1)) * nx + e % (nx - 1);
                (t, t + 1, hx)
            } else {
                (e - nh, e - nh + nx, hy)
            }
        };
        self.div.iter_mut().for_each(|d| *d = 0.0);
        for (e, &av) in a.iter().enumerate() {
            let w = grid.edge_weight(e);
            if w > 0.0 {
                let (t, h, len) = ends(e);
                self.div[h] += w * av / len;
                self.div[t] -= w * av / len;
            }
        }
        let lambda = self.params.coupling().powi(2);
        let mut penalty = 0.0;
        for (d, &wn) in self.div.iter_mut().zip(grid.node_weights()) {
            if wn > 0.0 {
                penalty += lambda * *d * *d / wn;
                *d *= 2.0 * lambda / wn;
            } else {
                *d = 0.0;
            }
        }
        for e in 0..a.len() {
            let w = grid.edge_weight(e);
            if w > 0.0 {
                let (t, h, len) = ends(e);
                g[2 * n + e] += w * (self.div[h] - self.div[t]) / len;
            }
        }
        e + penalty
    }
}

impl Problem<'_> {
    /// `max(|r_psi|_inf / kappa^2, |r_A|_inf)` from a packed gradient.
    fn scaled_residual(&self, g: &[f64]) -> f64 {
        let n = self.n_nodes;
        let mut rp: f64 = 0.0;
        for k in 0..n {
            let m = g[2 * k].hypot(g[2 * k + 1]) * self.inv_node[k];
            rp = rp.max(m);
        }
        let ra = g[2 * n..].iter().zip(&self.inv_edge).fold(0.0f64, |m, (g, w)| m.max((g * w).abs()));
        (rp / (self.params.kappa * self.params.kappa)).max(ra)
    }
}

/// Lanes of independent partial sums; lets the reductions vectorize.
const LANES: usize = 8;

fn dot<T: Copy + Into<f64>>(a: &[T], b: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let (ac, bc) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| (*x).into() * y).sum();
    for (x, y) in ac.zip(bc) {
        for l in 0..LANES {
            acc[l] += x[l].into() * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `d += a x`, returning `<w, d>` of the updated `d`.
fn axpy_dot(d: &mut [f64], a: f64, x: &[f32], w: &[f32]) -> f64 {
    let mut acc = [0.0; LANES];
    let mut dc = d.chunks_exact_mut(LANES);
    let (mut xc, mut wc) = (x.chunks_exact(LANES), w.chunks_exact(LANES));
    for ((dv, xv), wv) in (&mut dc).zip(&mut xc).zip(&mut wc) {
        for l in 0..LANES {
            dv[l] += a * f64::from(xv[l]);
            acc[l] += f64::from(wv[l]) * dv[l];
        }
    }
    let mut tail = 0.0;
    for ((dv, xv), wv) in dc.into_remainder().iter_mut().zip(xc.remainder()).zip(wc.remainder()) {
        *dv += a * f64::from(*xv);
        tail += f64::from(*wv) * *dv;
    }
    acc.iter().sum::<f64>() + tail
}

fn axpy(d: &mut [f64], a: f64, x: &[f32]) {
    for (dv, xv) in d.iter_mut().zip(x) {
        *dv += a * f64::from(*xv);
    }
}

/// Correction pairs, stored in single precision: the recursion only shapes
/// the search direction, and halving the storage halves its memory traffic.
struct Memory {
    s: Vec<Vec<f32>>,
    y: Vec<Vec<f32>>,
    rho: Vec<f64>,
    /// Scaling of the initial inverse Hessian from the newest pair.
    gamma: f64,
    cap: usize,
}

impl Memory {
    fn new(cap: usize) -> Self {
        Memory { s: vec![], y: vec![], rho: vec![], gamma: 1.0, cap }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
        self.gamma = 1.0;
    }

    /// Stores a pair; `hy` is the initial inverse Hessian applied to `y`.
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>, hy: &[f64]) {
        let (sy, yhy) = (dot(&s, &y), dot(&y, hy));
        let narrow = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>();
        let (s, y) = (narrow(s), narrow(y));
        // Curvature of the stored pair, so the recursion stays consistent.
        let stored: f64 = s.iter().zip(&y).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
        if !(sy > 0.0 && yhy > 0.0 && stored > 0.0) {
            return;
        }
        self.gamma = sy / yhy;
        if self.s.len() == self.cap {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
        let sy = stored;
        self.rho.push(1.0 / sy);
    }

    /// Two-loop recursion: writes `-H g` into `d`. Each update is fused with
    /// the inner product the next step needs, halving the passes over memory.
    fn direction(&self, g: &[f64], d: &mut [f64], precondition: impl FnOnce(&mut [f64])) {
        d.copy_from_slice(g);
        let m = self.s.len();
        let mut alpha = vec![0.0; m];
        if m > 0 {
            let mut next = dot(&self.s[m - 1], d);
            for i in (0..m).rev() {
                alpha[i] = self.rho[i] * next;
                let y = &self.y[i];
                next = match i.checked_sub(1) {
                    Some(k) => axpy_dot(d, -alpha[i], y, &self.s[k]),
                    None => {
                        axpy(d, -alpha[i], y);
                        0.0
                    }
                };
            }
        }
        precondition(d);
        d.iter_mut().for_each(|v| *v *= self.gamma);
        let mut next = if m > 0 { dot(&self.y[0], d) } else { 0.0 };
        for i in 0..m {
            let coef = alpha[i] - self.rho[i] * next;
            next = match self.y.get(i + 1) {
                Some(y) => axpy_dot(d, coef, &self.s[i], y),
                None => {
                    axpy(d, coef, &self.s[i]);
                    0.0
                }
            };
        }
        d.iter_mut().for_each(|v| *v = -*v);
    }
}

struct Trial {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
}

enum Search {
    Accepted(Trial),
    Failed,
}

fn line_search<O: Objective>(
    prob: &mut O,
    sc: &StepControl,
    x: &[f64],
    f0: f64,
    d: &[f64],
    g0d: f64,
    alpha0: f64,
    iteration: usize,
) -> Result<Search> {
    let slack = sc.energy_noise * f0.abs().max(1.0);
    let mut xt = vec![0.0; x.len()];
    let mut gt = vec![0.0; x.len()];
    let (mut lo, mut d_lo) = (0.0, g0d);
    let mut best: Option<Trial> = None;
    let mut hi: Option<(f64, f64)> = None;
    let mut alpha = alpha0;
    let mut nonfinite = 0;
    for _ in 0..sc.max_line_search {
        for i in 0..x.len() {
            xt[i] = x[i] + alpha * d[i];
        }
        let f = prob.eval(&xt, &mut gt);
        let gd = dot(&gt, d);
        if !f.is_finite() || !gd.is_finite() {
            nonfinite += 1;
            if nonfinite >= sc.max_line_search / 2 {
                return Err(Error::NonFinite { iteration });
            }
            hi = Some((alpha, f64::INFINITY));
            alpha = 0.5 * (lo + alpha);
            continue;
        }
        let decrease = f <= f0 + sc.armijo * alpha * g0d
            || (f <= f0 + slack && gd <= 0.8 * g0d.abs());
        if decrease && gd.abs() <= sc.curvature * g0d.abs() {
            return Ok(Search::Accepted(Trial { alpha, f, g: gt }));
        }
        if !decrease || gd > 0.0 {
            hi = Some((alpha, if decrease { gd } else { f64::INFINITY }));
        } else {
            lo = alpha;
            d_lo = gd;
            if best.as_ref().is_none_or(|b| f < b.f) {
                best = Some(Trial { alpha, f, g: gt.clone() });
            }
        }
        alpha = match hi {
            None => alpha * 4.0,
            Some((a_hi, d_hi)) => {
                let width = a_hi - lo;
                let trial = if d_hi.is_finite() && d_hi > d_lo {
                    lo - d_lo * width / (d_hi - d_lo)
                } else {
                    lo + 0.5 * width
                };
                trial.clamp(lo + 0.1 * width, a_hi - 0.1 * width)
            }
        };
    }
    Ok(match best {
        Some(mut b) => {
            // Leave the objective evaluated at the point being returned.
            for i in 0..x.len() {
                xt[i] = x[i] + b.alpha * d[i];
            }
            b.f = prob.eval(&xt, &mut b.g);
            Search::Accepted(b)
        }
        None => Search::Failed,
    })
}

/// What the quasi-Newton loop needs from a problem.
pub(crate) trait Objective {
    /// Value of the descent objective, with its gradient written to `g`.
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64;
    /// Applies the initial inverse Hessian in place.
    fn precondition(&mut self, v: &mut [f64]);
    /// Stationarity measure of the most recent evaluation.
    fn residual(&self) -> f64;
}

pub(crate) struct Descent {
    pub iterations: usize,
    pub trace: Vec<(usize, f64)>,
}

/// Limited-memory BFGS from `x` until `residual() <= opts.tol_residual`, the
/// iteration budget runs out, or three consecutive line searches fail.
/// `record` sees the iterate every `opts.record_every` steps.
pub(crate) fn lbfgs<O: Objective>(
    obj: &mut O,
    x: &mut [f64],
    opts: &SolveOptions,
    mut record: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<Descent> {
    let mut g = vec![0.0; x.len()];
    let mut f = obj.eval(x, &mut g);
    if !f.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut trace = vec![(0, f)];
    let mut memory = Memory::new(opts.step_control.memory);
    let mut d = vec![0.0; x.len()];
    let mut hy = vec![0.0; x.len()];
    let mut iterations = 0;
    let mut failures = 0;
    let mut converged = obj.residual() <= opts.tol_residual;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        memory.direction(&g, &mut d, |v| obj.precondition(v));
        let mut g0d = dot(&g, &d);
        if !(g0d < 0.0) {
            memory.clear();
            memory.direction(&g, &mut d, |v| obj.precondition(v));
            g0d = dot(&g, &d);
        }
        match line_search(obj, &opts.step_control, x, f, &d, g0d, 1.0, iterations)? {
            Search::Accepted(t) => {
                failures = 0;
                let s: Vec<f64> = d.iter().map(|v| t.alpha * v).collect();
                let y: Vec<f64> = t.g.iter().zip(&g).map(|(a, b)| a - b).collect();
                for (xv, sv) in x.iter_mut().zip(&s) {
                    *xv += sv;
                }
                hy.copy_from_slice(&y);
                obj.precondition(&mut hy);
                memory.push(s, y, &hy);
                f = t.f;
                g = t.g;
            }
            Search::Failed => {
                failures += 1;
                memory.clear();
                if failures >= 3 {
                    break;
                }
                // Restore the evaluation state at the current iterate.
                f = obj.eval(x, &mut g);
                continue;
            }
        }
        converged = obj.residual() <= opts.tol_residual;
        if iterations % opts.record_every == 0 {
            trace.push((iterations, f));
            record(iterations, x)?;
        }
    }
    if trace.last().map(|t| t.0) != Some(iterations) {
        trace.push((iterations, f));
    }
    Ok(Descent { iterations, trace })
}

fn descend(mut state: GLState, opts: &SolveOptions) -> Result<(GLState, SolveReport)> {
    opts.validate()?;
    let grid = state.grid().clone();
    let params = state.params;
    state = coulomb_pin(&state)?;
    let mut prob = Problem::new(&grid, params);
    let mut x: Vec<f64> = Vec::with_capacity(2 * grid.n_nodes() + grid.n_edges());
    for p in state.psi.values() {
        x.push(p.re);
        x.push(p.im);
    }
    x.extend_from_slice(state.a.values());
    let run = lbfgs(&mut prob, &mut x, opts, |it, x| match &opts.checkpoint_dir {
        Some(dir) => write_checkpoint(dir, it, &grid, params, x),
        None => Ok(()),
    })?;
    let out = unpack(&grid, params, &x)?;
    let out = coulomb_pin(&out)?;
    let residual = gl::residual(&out).scaled_inf(&params);
    let report = SolveReport {
        iterations: run.iterations,
        final_energy: gl::energy(&out),
        final_residual_inf: residual,
        converged: residual <= opts.tol_residual,
        energy_trace: run.trace,
        no_progress: false,
        resolved: params.resolved_by(&grid),
    };
    Ok((out, report))
}

fn unpack(grid: &Arc<Grid2D>, params: GLParams, x: &[f64]) -> Result<GLState> {
    let n = grid.n_nodes();
    let psi = (0..n).map(|k| Complex64::new(x[2 * k], x[2 * k + 1])).collect();
    let psi = ComplexField::from_values(grid.clone(), psi)?;
    let a = EdgeField::from_values(grid.clone(), x[2 * n..].to_vec())?;
    GLState::new(psi, a, params)
}

/// Gauge transformation to the Coulomb representative.
fn coulomb_pin(state: &GLState) -> Result<GLState> {
    let eta = gauge::gauge_potential(&state.a)?;
    let neg = crate::field::ScalarField::from_values(
        eta.grid().clone(),
        eta.values().iter().map(|v| -v).collect(),
    )?;
    let (psi, a) = gauge::gauge_transform(&state.psi, &state.a, &neg, state.params.coupling())?;
    GLState::new(psi, a, state.params)
}

fn write_checkpoint(dir: &std::path::Path, it: usize, grid: &Arc<Grid2D>, params: GLParams, x: &[f64]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let state = unpack(grid, params, x)?;
    state.psi.write_dump(&dir.join(format!("psi_{it:08}")))?;
    state.a.write_dump(&dir.join(format!("a_{it:08}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Norm;

    fn disk(n: usize) -> Arc<Grid2D> {
        Arc::new(Grid2D::new(DomainKind::Disk, 1.0, n).unwrap())
    }

    #[test]
    fn normal_init_is_already_stationary() {
        let g = disk(33);
        let p = GLParams::from_b(5.0, 1.3).unwrap();
        let opts = SolveOptions::default().with_init(InitKind::Normal);
        let (s, r) = minimize(&g, p, &opts).unwrap();
        assert!(r.converged && r.iterations <= 2);
        assert_eq!(s.psi.sup_norm(), 0.0);
        let f = gauge::build_f(&g).unwrap();
        assert!(s.a.sub(&f).norm(Norm::Inf) < 1e-8);
    }

    #[test]
    fn converges_and_certifies() {
        let g = disk(33);
        let p = GLParams::new(3.0, 2.0).unwrap();
        let opts = SolveOptions { record_every: 5, ..SolveOptions::default() };
        let (s, r) = minimize(&g, p, &opts).unwrap();
        assert!(r.converged, "{r:?}");
        let res = gl::residual(&s);
        assert!(res.psi_inf() <= 1e-6 * 9.0 && res.a_inf() <= 1e-6);
        assert!(s.psi.sup_norm() > 0.1 && s.psi.sup_norm() <= 1.0 + 1e-6);
        let init = GLState::new(initial_psi(&g, opts.init), gauge::build_f(&g).unwrap(), p).unwrap();
        assert!(r.final_energy <= gl::energy(&init));
        let scale = r.final_energy.abs().max(1.0);
        for w in r.energy_trace.windows(2).filter(|w| w[0].0 >= 10) {
            assert!(w[1].1 <= w[0].1 + 1e-12 * scale, "{w:?}");
        }
        let div = gauge::divergence(&s.a).unwrap();
        assert!(div.norm(Norm::Inf) <= 1e-8);
    }

    #[test]
    fn deterministic() {
        let g = disk(25);
        let p = GLParams::new(4.0, 3.0).unwrap();
        let opts = SolveOptions::default();
        let (_, a) = minimize(&g, p, &opts).unwrap();
        let (_, b) = minimize(&g, p, &opts).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.final_energy.to_bits(), b.final_energy.to_bits());
    }

    #[test]
    fn polish_behaviour() {
        let g = disk(25);
        let p = GLParams::new(4.0, 3.0).unwrap();
        let opts = SolveOptions::default();
        let (s, _) = minimize(&g, p, &opts).unwrap();
        let (same, r) = polish(&s, &opts).unwrap();
        assert!(r.no_progress);
        assert_eq!(same.psi, s.psi);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut noisy = s.clone();
        for v in noisy.psi.values_mut() {
            if *v != Complex64::new(0.0, 0.0) {
                *v *= 1.0 + 0.01 * rng.gen_range(-1.0..1.0);
            }
        }
        let (back, r) = polish(&noisy, &opts).unwrap();
        assert!(r.converged && !r.no_progress);
        assert!(gl::residual(&back).scaled_inf(&p) <= 1e-6);
    }

    #[test]
    fn rejects_bad_options() {
        let g = disk(17);
        let p = GLParams::new(1.0, 1.0).unwrap();
        let bad = SolveOptions { tol_residual: 0.0, ..SolveOptions::default() };
        assert!(minimize(&g, p, &bad).is_err());
        let bad = SolveOptions { max_iter: 0, ..SolveOptions::default() };
        assert!(minimize(&g, p, &bad).is_err());
    }

    #[test]
    fn options_round_trip_through_json() {
        let o = SolveOptions { init: InitKind::Uniform { value: 0.5 }, ..SolveOptions::default() };
        let s = serde_json::to_string(&o).unwrap();
        assert!(s.contains("\"kind\":\"uniform\""));
        let back: SolveOptions = serde_json::from_str(&s).unwrap();
        assert_eq!(back, o);
    }
}
