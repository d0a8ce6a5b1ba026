//! Jacobi-preconditioned conjugate gradients for real symmetric
//! positive (semi-)definite operators given as closures.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Stop when `|r| <= rel_tol * |b|`.
    pub rel_tol: f64,
    /// Also stop when `|r| <= abs_tol`.
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { rel_tol: 1e-10, abs_tol: 0.0, max_iter: 100_000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` starting from `x`. Entries whose `diag` is zero are
/// treated as absent and kept at zero.
pub fn solve(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
    solver: &'static str,
) -> Result<CgReport> {
    let n = b.len();
    let inv_diag: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    for (xi, &d) in x.iter_mut().zip(&inv_diag) {
        if d == 0.0 {
            *xi = 0.0;
        }
    }
    let bnorm = dot(b, b).sqrt();
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = (0..n).map(|i| if inv_diag[i] > 0.0 { b[i] - ax[i] } else { 0.0 }).collect();
    let target = (opts.rel_tol * bnorm).max(opts.abs_tol);
    let mut rnorm = dot(&r, &r).sqrt();
    if rnorm <= target || bnorm == 0.0 && rnorm == 0.0 {
        return Ok(CgReport { iterations: 0, relative_residual: rel(rnorm, bnorm) });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::SolverDiverged {
                solver,
                iterations: it,
                residual: rel(rnorm, bnorm),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = dot(&r, &r).sqrt();
        if rnorm <= target {
            return Ok(CgReport { iterations: it, relative_residual: rel(rnorm, bnorm) });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged { solver, iterations: opts.max_iter, residual: rel(rnorm, bnorm) })
}

fn rel(r: f64, b: f64) -> f64 {
    if b > 0.0 {
        r / b
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_1d_dirichlet_laplacian() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r;
            }
        };
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let rep = solve(apply, &vec![2.0; n], &b, &mut x, CgOptions::default(), "test").unwrap();
        assert!(rep.relative_residual <= 1e-10);
        // Exact solution of -u'' = 1 on the lattice: x_i = (i + 1)(n - i) / 2.
        for (i, xi) in x.iter().enumerate() {
            let exact = (i + 1) as f64 * (n - i) as f64 / 2.0;
            assert!((xi - exact).abs() < 1e-7 * exact);
        }
    }
}
