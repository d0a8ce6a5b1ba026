//! Rectangular node lattices with a domain mask.
//!
//! Every field in the crate lives on a [`Grid2D`]. Scalars and the order
//! parameter sit on nodes, the vector potential on edges (staggered layout),
//! and curls on plaquettes. All quadrature weights derive from the clipped
//! plaquette areas: a node receives a quarter of each adjacent plaquette, an
//! edge half of each adjacent plaquette. Using the same weights for the energy,
//! the norms and the gauge solves keeps the discrete identities exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible node count per direction.
pub const MIN_NODES: usize = 8;

/// Plaquettes whose clipped area falls below this fraction of a full cell are
/// dropped from a disk domain.
const SLIVER_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Rectangle,
    Disk,
    /// Doubly periodic lattice; the operator acting on it decides the
    /// boundary identification.
    Periodic,
}

impl DomainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::Rectangle => "rectangle",
            DomainKind::Disk => "disk",
            DomainKind::Periodic => "periodic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rectangle" => Ok(DomainKind::Rectangle),
            "disk" => Ok(DomainKind::Disk),
            "periodic" => Ok(DomainKind::Periodic),
            other => Err(Error::InvalidArgument(format!("unknown domain kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Boundary,
    Exterior,
}

/// A node lattice `x = origin + (i hx, j hy)` with its mask and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    origin: [f64; 2],
    kind: DomainKind,
    mask: Vec<NodeKind>,
    boundary_distance: Vec<f64>,
    node_weight: Vec<f64>,
    hedge_weight: Vec<f64>,
    vedge_weight: Vec<f64>,
    plaquette_weight: Vec<f64>,
}

impl Grid2D {
    /// Square grid for a rectangle of side `size` or a disk of radius `size`,
    /// centred at the origin, with `n` nodes per direction.
    pub fn new(kind: DomainKind, size: f64, n: usize) -> Result<Self> {
        match kind {
            DomainKind::Rectangle => Self::rectangle(size, size, n, n),
            DomainKind::Disk => Self::disk(size, n),
            DomainKind::Periodic => {
                Self::periodic(size, size, n, n)
            }
        }
    }

    /// Rectangle `[-lx/2, lx/2] x [-ly/2, ly/2]` with `nx x ny` nodes.
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        check_shape(lx, ly, nx, ny)?;
        let hx = lx / (nx - 1) as f64;
        let hy = ly / (ny - 1) as f64;
        let origin = [-0.5 * lx, -0.5 * ly];
        let plaq = vec![hx * hy; (nx - 1) * (ny - 1)];
        let mut grid = Self::from_plaquettes(DomainKind::Rectangle, nx, ny, hx, hy, origin, plaq);
        for j in 0..ny {
            for i in 0..nx {
                let x = grid.node_position(i, j);
                let d = (x[0] - origin[0])
                    .min(origin[0] + lx - x[0])
                    .min(x[1] - origin[1])
                    .min(origin[1] + ly - x[1])
                    .max(0.0);
                grid.boundary_distance[j * nx + i] = d;
            }
        }
        Ok(grid)
    }

    /// Disk of the given radius centred at the origin, `n x n` nodes spanning
    /// the bounding square. Plaquettes cut by the circle carry their clipped
    /// area.
    pub fn disk(radius: f64, n: usize) -> Result<Self> {
        check_shape(2.0 * radius, 2.0 * radius, n, n)?;
        let h = 2.0 * radius / (n - 1) as f64;
        let origin = [-radius, -radius];
        let mut plaq = vec![0.0; (n - 1) * (n - 1)];
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let x0 = origin[0] + i as f64 * h;
                let y0 = origin[1] + j as f64 * h;
                let area = clipped_disk_area([x0, x0 + h], [y0, y0 + h], radius);
                plaq[j * (n - 1) + i] = if area > SLIVER_FRACTION * h * h { area } else { 0.0 };
            }
        }
        let mut grid = Self::from_plaquettes(DomainKind::Disk, n, n, h, h, origin, plaq);
        for j in 0..n {
            for i in 0..n {
                let x = grid.node_position(i, j);
                grid.boundary_distance[j * n + i] = (radius - x[0].hypot(x[1])).max(0.0);
            }
        }
        Ok(grid)
    }

    /// Periodic lattice of `nx x ny` nodes on `[0, lx) x [0, ly)`; every node is
    /// interior and carries the full cell area.
    pub fn periodic(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        check_shape(lx, ly, nx, ny)?;
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        let cell = hx * hy;
        Ok(Grid2D {
            nx,
            ny,
            hx,
            hy,
            origin: [0.0, 0.0],
            kind: DomainKind::Periodic,
            mask: vec![NodeKind::Interior; nx * ny],
            boundary_distance: vec![f64::INFINITY; nx * ny],
            node_weight: vec![cell; nx * ny],
            hedge_weight: vec![cell; nx * ny],
            vedge_weight: vec![cell; nx * ny],
            plaquette_weight: vec![cell; nx * ny],
        })
    }

    fn from_plaquettes(
        kind: DomainKind,
        nx: usize,
        ny: usize,
        hx: f64,
        hy: f64,
        origin: [f64; 2],
        plaquette_weight: Vec<f64>,
    ) -> Self {
        let full = hx * hy;
        let mut node_weight = vec![0.0; nx * ny];
        let mut hedge_weight = vec![0.0; (nx - 1) * ny];
        let mut vedge_weight = vec![0.0; nx * (ny - 1)];
        let mut touches_cut = vec![false; nx * ny];
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let w = plaquette_weight[j * (nx - 1) + i];
                let corners = [j * nx + i, j * nx + i + 1, (j + 1) * nx + i, (j + 1) * nx + i + 1];
                let cut = w < full * (1.0 - 1e-12);
                for &c in &corners {
                    node_weight[c] += 0.25 * w;
                    touches_cut[c] |= cut;
                }
                hedge_weight[j * (nx - 1) + i] += 0.5 * w;
                hedge_weight[(j + 1) * (nx - 1) + i] += 0.5 * w;
                vedge_weight[j * nx + i] += 0.5 * w;
                vedge_weight[j * nx + i + 1] += 0.5 * w;
            }
        }
        // Nodes on the outer ring of the lattice always touch a missing cell.
        for j in 0..ny {
            for i in 0..nx {
                if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                    touches_cut[j * nx + i] = true;
                }
            }
        }
        let mask = node_weight
            .iter()
            .zip(&touches_cut)
            .map(|(&w, &cut)| match (w > 0.0, cut) {
                (false, _) => NodeKind::Exterior,
                (true, true) => NodeKind::Boundary,
                (true, false) => NodeKind::Interior,
            })
            .collect();
        Grid2D {
            nx,
            ny,
            hx,
            hy,
            origin,
            kind,
            mask,
            boundary_distance: vec![0.0; nx * ny],
            node_weight,
            hedge_weight,
            vedge_weight,
            plaquette_weight,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    /// Largest spacing.
    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }
    pub fn kind(&self) -> DomainKind {
        self.kind
    }
    pub fn is_periodic(&self) -> bool {
        self.kind == DomainKind::Periodic
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }
    pub fn n_hedges(&self) -> usize {
        self.hedge_weight.len()
    }
    pub fn n_vedges(&self) -> usize {
        self.vedge_weight.len()
    }
    pub fn n_edges(&self) -> usize {
        self.n_hedges() + self.n_vedges()
    }
    pub fn n_plaquettes(&self) -> usize {
        self.plaquette_weight.len()
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node_coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn node_position(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.hx, self.origin[1] + j as f64 * self.hy]
    }

    pub fn node_kind(&self, k: usize) -> NodeKind {
        self.mask[k]
    }
    pub fn mask(&self) -> &[NodeKind] {
        &self.mask
    }
    pub fn is_active(&self, k: usize) -> bool {
        self.mask[k] != NodeKind::Exterior
    }
    pub fn boundary_distance(&self) -> &[f64] {
        &self.boundary_distance
    }
    pub fn node_weights(&self) -> &[f64] {
        &self.node_weight
    }
    /// Edge weights, horizontal block followed by vertical block.
    pub fn edge_weight(&self, e: usize) -> f64 {
        let nh = self.n_hedges();
        if e < nh {
            self.hedge_weight[e]
        } else {
            self.vedge_weight[e - nh]
        }
    }
    pub fn hedge_weights(&self) -> &[f64] {
        &self.hedge_weight
    }
    pub fn vedge_weights(&self) -> &[f64] {
        &self.vedge_weight
    }
    pub fn plaquette_weights(&self) -> &[f64] {
        &self.plaquette_weight
    }

    /// Horizontal edge from node `(i, j)` to `(i + 1, j)`.
    #[inline]
    pub fn hedge_index(&self, i: usize, j: usize) -> usize {
        if self.is_periodic() {
            j * self.nx + i
        } else {
            j * (self.nx - 1) + i
        }
    }

    /// Vertical edge from node `(i, j)` to `(i, j + 1)`, offset past the
    /// horizontal block.
    #[inline]
    pub fn vedge_index(&self, i: usize, j: usize) -> usize {
        self.n_hedges() + j * self.nx + i
    }

    /// Plaquette with lower-left corner `(i, j)`.
    #[inline]
    pub fn plaquette_index(&self, i: usize, j: usize) -> usize {
        if self.is_periodic() {
            j * self.nx + i
        } else {
            j * (self.nx - 1) + i
        }
    }

    /// Number of plaquettes per row.
    pub fn plaquette_row_len(&self) -> usize {
        if self.is_periodic() {
            self.nx
        } else {
            self.nx - 1
        }
    }

    /// Midpoint of an edge (global index).
    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let nh = self.n_hedges();
        if e < nh {
            let row = self.plaquette_row_len();
            let (i, j) = (e % row, e / row);
            let p = self.node_position(i, j);
            [p[0] + 0.5 * self.hx, p[1]]
        } else {
            let k = e - nh;
            let (i, j) = (k % self.nx, k / self.nx);
            let p = self.node_position(i, j);
            [p[0], p[1] + 0.5 * self.hy]
        }
    }

    pub fn plaquette_center(&self, p: usize) -> [f64; 2] {
        let row = self.plaquette_row_len();
        let (i, j) = (p % row, p / row);
        let x = self.node_position(i, j);
        [x[0] + 0.5 * self.hx, x[1] + 0.5 * self.hy]
    }

    /// Total quadrature area of the masked domain.
    pub fn area(&self) -> f64 {
        self.node_weight.iter().sum()
    }

    /// Distance from an arbitrary point to the domain boundary; negative
    /// outside. Periodic grids return infinity.
    pub fn distance_to_boundary(&self, x: [f64; 2]) -> f64 {
        match self.kind {
            DomainKind::Rectangle => {
                let x1 = self.origin[0] + (self.nx - 1) as f64 * self.hx;
                let y1 = self.origin[1] + (self.ny - 1) as f64 * self.hy;
                (x[0] - self.origin[0]).min(x1 - x[0]).min(x[1] - self.origin[1]).min(y1 - x[1])
            }
            DomainKind::Disk => {
                let r = 0.5 * (self.nx - 1) as f64 * self.hx;
                let c = [self.origin[0] + r, self.origin[1] + r];
                r - (x[0] - c[0]).hypot(x[1] - c[1])
            }
            DomainKind::Periodic => f64::INFINITY,
        }
    }

    /// Characteristic length: the side for rectangles (the shorter one), the
    /// radius for disks.
    pub fn domain_scale(&self) -> f64 {
        match self.kind {
            DomainKind::Rectangle => {
                ((self.nx - 1) as f64 * self.hx).min((self.ny - 1) as f64 * self.hy)
            }
            DomainKind::Disk => 0.5 * (self.nx - 1) as f64 * self.hx,
            DomainKind::Periodic => (self.nx as f64 * self.hx).min(self.ny as f64 * self.hy),
        }
    }

    /// Rebuilds a grid from the geometric header of a field dump.
    pub fn from_header(
        kind: DomainKind,
        nx: usize,
        ny: usize,
        hx: f64,
        hy: f64,
    ) -> Result<Self> {
        match kind {
            DomainKind::Rectangle => {
                Self::rectangle((nx - 1) as f64 * hx, (ny - 1) as f64 * hy, nx, ny)
            }
            DomainKind::Disk => {
                if nx != ny {
                    return Err(Error::InvalidArgument("disk grids are square".into()));
                }
                Self::disk(0.5 * (nx - 1) as f64 * hx, nx)
            }
            DomainKind::Periodic => Self::periodic(nx as f64 * hx, ny as f64 * hy, nx, ny),
        }
    }
}

fn check_shape(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<()> {
    if nx < MIN_NODES || ny < MIN_NODES {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least {MIN_NODES} nodes per direction, got {nx}x{ny}"
        )));
    }
    if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
        return Err(Error::InvalidArgument(format!("domain size must be positive, got {lx}x{ly}")));
    }
    Ok(())
}

/// Exact area of the axis-aligned box `xs x ys` intersected with the disk of
/// radius `r` centred at the origin.
pub fn clipped_disk_area(xs: [f64; 2], ys: [f64; 2], r: f64) -> f64 {
    let a = xs[0].max(-r);
    let b = xs[1].min(r);
    if a >= b {
        return 0.0;
    }
    // Between breakpoints the overlap of [y0, y1] with the chord
    // [-s(x), s(x)] follows one fixed branch.
    let mut pts = vec![a, b];
    for y in [ys[0], ys[1]] {
        if y.abs() < r {
            let x = (r * r - y * y).sqrt();
            for c in [-x, x] {
                if c > a && c < b {
                    pts.push(c);
                }
            }
        }
    }
    pts.sort_by(|p, q| p.total_cmp(q));
    let chord = |x: f64| (r * r - x * x).max(0.0).sqrt();
    // Antiderivative of the half chord length.
    let prim = |x: f64| {
        let x = x.clamp(-r, r);
        0.5 * (x * chord(x) + r * r * (x / r).asin())
    };
    let mut area = 0.0;
    for w in pts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 <= x0 {
            continue;
        }
        let xm = 0.5 * (x0 + x1);
        let s = chord(xm);
        let top_is_chord = s <= ys[1];
        let bottom_is_chord = -s >= ys[0];
        if s.min(ys[1]) <= (-s).max(ys[0]) {
            continue;
        }
        let int_top = if top_is_chord { prim(x1) - prim(x0) } else { ys[1] * (x1 - x0) };
        let int_bottom = if bottom_is_chord { -(prim(x1) - prim(x0)) } else { ys[0] * (x1 - x0) };
        area += int_top - int_bottom;
    }
    area
}
