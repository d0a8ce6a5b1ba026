//! Node, edge and plaquette fields on a [`Grid2D`], their discrete norms, and
//! the on-disk dump format.
//!
//! A dump is a pair of files sharing a prefix: `<prefix>.json` holds the
//! geometric header and `<prefix>.bin` the raw little-endian `f64` payload in
//! row-major order (complex values interleaved as `re, im`; edge fields as the
//! horizontal block followed by the vertical block).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainKind, Grid2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2,
    L4,
    Inf,
}

impl Norm {
    pub fn from_exponent(p: u32) -> Option<Self> {
        match p {
            2 => Some(Norm::L2),
            4 => Some(Norm::L4),
            _ => None,
        }
    }
}

/// Weighted discrete norm of `|values|` with the given weights; only entries
/// with positive weight participate.
fn weighted_norm(mags: impl Iterator<Item = (f64, f64)>, norm: Norm) -> f64 {
    match norm {
        Norm::L2 => mags.filter(|(w, _)| *w > 0.0).map(|(w, m)| w * m * m).sum::<f64>().sqrt(),
        Norm::L4 => mags
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, m)| w * (m * m) * (m * m))
            .sum::<f64>()
            .powf(0.25),
        Norm::Inf => mags.filter(|(w, _)| *w > 0.0).fold(0.0, |acc, (_, m)| acc.max(m)),
    }
}

/// Complex node field (order parameters, test functions).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Arc<Grid2D>,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: Arc<Grid2D>) -> Self {
        let n = grid.n_nodes();
        ComplexField { grid, values: vec![Complex64::new(0.0, 0.0); n] }
    }

    /// Samples `f` at active nodes; exterior nodes are zero.
    pub fn from_fn(grid: Arc<Grid2D>, mut f: impl FnMut([f64; 2]) -> Complex64) -> Self {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.n_nodes()];
        for (k, v) in values.iter_mut().enumerate() {
            if grid.is_active(k) {
                let (i, j) = grid.node_coords(k);
                *v = f(grid.node_position(i, j));
            }
        }
        ComplexField { grid, values }
    }

    pub fn constant(grid: Arc<Grid2D>, c: Complex64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    /// Wraps raw values, zeroing exterior nodes.
    pub fn from_values(grid: Arc<Grid2D>, mut values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::InvalidArgument(format!(
                "expected {} node values, got {}",
                grid.n_nodes(),
                values.len()
            )));
        }
        for (k, v) in values.iter_mut().enumerate() {
            if !grid.is_active(k) {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        Ok(ComplexField { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm(&self, norm: Norm) -> f64 {
        weighted_norm(
            self.grid.node_weights().iter().zip(&self.values).map(|(&w, v)| (w, v.norm())),
            norm,
        )
    }

    pub fn sup_norm(&self) -> f64 {
        self.norm(Norm::Inf)
    }

    /// `sum_n w_n conj(self_n) other_n`.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        self.grid
            .node_weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(&w, (a, b))| a.conj() * b * w)
            .sum()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexField {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| if self.grid.is_active(k) { f(v) } else { v })
            .collect();
        ComplexField { grid: self.grid.clone(), values }
    }

    pub fn sub(&self, other: &ComplexField) -> ComplexField {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        ComplexField { grid: self.grid.clone(), values }
    }

    pub fn abs(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.norm()).collect(),
        }
    }

    /// Bilinear interpolation at an arbitrary point from the active corners
    /// of the enclosing cell, renormalised over those corners. Points outside
    /// the lattice are clamped to it; a cell without active corners gives 0.
    pub fn sample(&self, x: [f64; 2]) -> Complex64 {
        let g = &self.grid;
        let at = |i: usize, j: usize| {
            let k = j * g.nx() + i;
            g.is_active(k).then(|| self.values[k])
        };
        bilinear(g.origin(), g.hx(), g.hy(), g.nx(), g.ny(), x, at)
    }

    pub fn write_dump(&self, prefix: &Path) -> Result<()> {
        let raw: Vec<f64> = self.values.iter().flat_map(|v| [v.re, v.im]).collect();
        write_dump(prefix, &self.grid, FieldKind::Complex, &raw)
    }

    pub fn read_dump(prefix: &Path) -> Result<Self> {
        let (grid, kind, raw) = read_dump(prefix)?;
        expect_kind(kind, FieldKind::Complex)?;
        if raw.len() != 2 * grid.n_nodes() {
            return Err(Error::InvalidArgument("complex dump has wrong length".into()));
        }
        let values = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        ComplexField::from_values(Arc::new(grid), values)
    }
}

/// Real node field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid2D>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<Grid2D>) -> Self {
        let n = grid.n_nodes();
        ScalarField { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<Grid2D>, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let mut values = vec![0.0; grid.n_nodes()];
        for (k, v) in values.iter_mut().enumerate() {
            if grid.is_active(k) {
                let (i, j) = grid.node_coords(k);
                *v = f(grid.node_position(i, j));
            }
        }
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Arc<Grid2D>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::InvalidArgument("node value count mismatch".into()));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn norm(&self, norm: Norm) -> f64 {
        weighted_norm(
            self.grid.node_weights().iter().zip(&self.values).map(|(&w, v)| (w, v.abs())),
            norm,
        )
    }

    pub fn integral(&self) -> f64 {
        self.grid.node_weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    pub fn write_dump(&self, prefix: &Path) -> Result<()> {
        write_dump(prefix, &self.grid, FieldKind::Real, &self.values)
    }

    pub fn read_dump(prefix: &Path) -> Result<Self> {
        let (grid, kind, raw) = read_dump(prefix)?;
        expect_kind(kind, FieldKind::Real)?;
        ScalarField::from_values(Arc::new(grid), raw)
    }
}

/// Real field on plaquette centres (curls, stream functions).
#[derive(Debug, Clone, PartialEq)]
pub struct PlaquetteField {
    grid: Arc<Grid2D>,
    values: Vec<f64>,
}

impl PlaquetteField {
    pub fn from_values(grid: Arc<Grid2D>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_plaquettes() {
            return Err(Error::InvalidArgument("plaquette value count mismatch".into()));
        }
        Ok(PlaquetteField { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self, norm: Norm) -> f64 {
        weighted_norm(
            self.grid.plaquette_weights().iter().zip(&self.values).map(|(&w, v)| (w, v.abs())),
            norm,
        )
    }

    pub fn integral(&self) -> f64 {
        self.grid.plaquette_weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }
}

/// Staggered edge field: `A_1` on horizontal edges, `A_2` on vertical edges,
/// both sampled at edge midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    grid: Arc<Grid2D>,
    values: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(grid: Arc<Grid2D>) -> Self {
        let n = grid.n_edges();
        EdgeField { grid, values: vec![0.0; n] }
    }

    /// Samples a vector field at edge midpoints: the first component on
    /// horizontal edges, the second on vertical ones. Inactive edges are 0.
    pub fn from_fn(grid: Arc<Grid2D>, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let nh = grid.n_hedges();
        let values = (0..grid.n_edges())
            .map(|e| {
                if grid.edge_weight(e) > 0.0 {
                    let v = f(grid.edge_midpoint(e));
                    if e < nh {
                        v[0]
                    } else {
                        v[1]
                    }
                } else {
                    0.0
                }
            })
            .collect();
        EdgeField { grid, values }
    }

    pub fn from_values(grid: Arc<Grid2D>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_edges() {
            return Err(Error::InvalidArgument(format!(
                "expected {} edge values, got {}",
                grid.n_edges(),
                values.len()
            )));
        }
        for (e, v) in values.iter_mut().enumerate() {
            if grid.edge_weight(e) == 0.0 {
                *v = 0.0;
            }
        }
        Ok(EdgeField { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn norm(&self, norm: Norm) -> f64 {
        weighted_norm(
            (0..self.values.len()).map(|e| (self.grid.edge_weight(e), self.values[e].abs())),
            norm,
        )
    }

    pub fn scale(&self, s: f64) -> EdgeField {
        EdgeField { grid: self.grid.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &EdgeField) -> EdgeField {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        EdgeField { grid: self.grid.clone(), values }
    }

    pub fn sub(&self, other: &EdgeField) -> EdgeField {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        EdgeField { grid: self.grid.clone(), values }
    }

    /// Bilinear interpolation of `(A_1, A_2)` at an arbitrary point, each
    /// component from its own staggered lattice of active edges.
    pub fn sample(&self, x: [f64; 2]) -> [f64; 2] {
        let g = &self.grid;
        let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
        let o = g.origin();
        let nh = g.n_hedges();
        let at = |off: usize, cols: usize| {
            move |i: usize, j: usize| {
                let e = off + j * cols + i;
                (g.edge_weight(e) > 0.0).then(|| Complex64::new(self.values[e], 0.0))
            }
        };
        let a1 = bilinear([o[0] + 0.5 * hx, o[1]], hx, hy, nx - 1, ny, x, at(0, nx - 1));
        let a2 = bilinear([o[0], o[1] + 0.5 * hy], hx, hy, nx, ny - 1, x, at(nh, nx));
        [a1.re, a2.re]
    }

    pub fn write_dump(&self, prefix: &Path) -> Result<()> {
        write_dump(prefix, &self.grid, FieldKind::Edge, &self.values)
    }

    pub fn read_dump(prefix: &Path) -> Result<Self> {
        let (grid, kind, raw) = read_dump(prefix)?;
        expect_kind(kind, FieldKind::Edge)?;
        EdgeField::from_values(Arc::new(grid), raw)
    }
}

fn bilinear(
    origin: [f64; 2],
    hx: f64,
    hy: f64,
    cols: usize,
    rows: usize,
    x: [f64; 2],
    at: impl Fn(usize, usize) -> Option<Complex64>,
) -> Complex64 {
    let locate = |t: f64, n: usize| {
        let t = t.clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n.saturating_sub(2));
        (i, t - i as f64)
    };
    let (i, fx) = locate((x[0] - origin[0]) / hx, cols);
    let (j, fy) = locate((x[1] - origin[1]) / hy, rows);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut wsum = 0.0;
    for (di, wx) in [(0, 1.0 - fx), (1, fx)] {
        for (dj, wy) in [(0, 1.0 - fy), (1, fy)] {
            let (ii, jj) = (i + di, j + dj);
            if ii >= cols || jj >= rows {
                continue;
            }
            if let Some(v) = at(ii, jj) {
                sum += v * (wx * wy);
                wsum += wx * wy;
            }
        }
    }
    if wsum > 1e-12 {
        sum / wsum
    } else {
        Complex64::new(0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Complex,
    Real,
    Edge,
}

/// JSON header of a field dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpMeta {
    pub version: u32,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    #[serde(rename = "originX")]
    pub origin_x: f64,
    #[serde(rename = "originY")]
    pub origin_y: f64,
    #[serde(rename = "domainKind")]
    pub domain_kind: String,
    #[serde(rename = "fieldKind")]
    pub field_kind: FieldKind,
    pub layout: String,
    pub encoding: String,
}

const LAYOUT: &str = "row-major";
const ENCODING: &str = "little-endian float64";

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_dump(prefix: &Path, grid: &Grid2D, kind: FieldKind, raw: &[f64]) -> Result<()> {
    let meta = DumpMeta {
        version: 1,
        nx: grid.nx(),
        ny: grid.ny(),
        hx: grid.hx(),
        hy: grid.hy(),
        origin_x: grid.origin()[0],
        origin_y: grid.origin()[1],
        domain_kind: grid.kind().as_str().to_string(),
        field_kind: kind,
        layout: LAYOUT.into(),
        encoding: ENCODING.into(),
    };
    let meta_path = with_ext(prefix, "json");
    let bin_path = with_ext(prefix, "bin");
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
    let mut bytes = Vec::with_capacity(raw.len() * 8);
    for v in raw {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&bin_path, e))?;
    Ok(())
}

fn read_dump(prefix: &Path) -> Result<(Grid2D, FieldKind, Vec<f64>)> {
    let meta_path = with_ext(prefix, "json");
    let bin_path = with_ext(prefix, "bin");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DumpMeta = serde_json::from_str(&text)?;
    if meta.version != 1 || meta.layout != LAYOUT || meta.encoding != ENCODING {
        return Err(Error::InvalidArgument(format!(
            "unsupported dump header in {}",
            meta_path.display()
        )));
    }
    let kind = DomainKind::parse(&meta.domain_kind)?;
    let grid = Grid2D::from_header(kind, meta.nx, meta.ny, meta.hx, meta.hy)?;
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidArgument("raw dump length is not a multiple of 8".into()));
    }
    let raw = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((grid, meta.field_kind, raw))
}

fn expect_kind(found: FieldKind, wanted: FieldKind) -> Result<()> {
    if found == wanted {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dump holds a {found:?} field, expected {wanted:?}")))
    }
}
