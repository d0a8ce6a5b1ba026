//! Parameter sweeps over `b` and seeds, driven by a JSON configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{self, CELL_TOL};
use crate::error::{Error, Result};
use crate::gl::{self, GLParams, GLState, THETA_ZERO};
use crate::grid::Grid2D;
use crate::measure::{self, BulkSpec};
use crate::minimize::{self, InitKind, SolveOptions};
use crate::output;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "GL_LAB_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum DomainSpec {
    Disk { radius: f64 },
    Rectangle { lx: f64, ly: f64 },
    /// Magnetically periodic cell; `kappa` only labels the records.
    #[serde(rename_all = "camelCase")]
    Cell { flux_quanta: u32, aspect: f64 },
}

impl DomainSpec {
    fn label(&self) -> &'static str {
        match self {
            DomainSpec::Disk { .. } => "disk",
            DomainSpec::Rectangle { .. } => "rectangle",
            DomainSpec::Cell { .. } => "cell",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DumpPolicy {
    Never,
    /// Runs that did not converge.
    Flagged,
    Always,
}

fn default_bulk() -> BulkSpec {
    BulkSpec::fixed(0.25)
}
fn default_amplitude() -> f64 {
    0.3
}
fn default_ball_tol() -> f64 {
    0.15
}
fn default_dump() -> DumpPolicy {
    DumpPolicy::Flagged
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    /// Nodes per side (along `x` for cells).
    pub n: usize,
    pub kappa: f64,
    pub b_list: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default = "default_bulk")]
    pub bulk: BulkSpec,
    /// Width of the boundary layer; defaults to two magnetic lengths.
    #[serde(default)]
    pub boundary_width: Option<f64>,
    /// Amplitude of the random initial order parameter.
    #[serde(default = "default_amplitude")]
    pub init_amplitude: f64,
    /// Relative slack on the ball-average bound.
    #[serde(default = "default_ball_tol")]
    pub ball_tol: f64,
    #[serde(default = "default_dump")]
    pub dump_fields: DumpPolicy,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.b_list.is_empty() {
            return Err(Error::EmptySweep);
        }
        if let Some(b) = self.b_list.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::Config(format!("every b must be positive, got {b}")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.boundary_width.is_some_and(|w| !(w > 0.0)) {
            return Err(Error::Config("boundaryWidth must be positive".into()));
        }
        self.solve.validate()
    }

    pub fn params(&self, b: f64) -> Result<GLParams> {
        GLParams::from_b(self.kappa, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    BulkSuperconducting,
    SurfaceSuperconducting,
    NormalCandidate,
}

/// Advisory regime label from `b = kappa / sigma`.
pub fn classify_regime(params: &GLParams) -> Regime {
    let b = params.b();
    if b > 1.0 {
        Regime::BulkSuperconducting
    } else if b > THETA_ZERO {
        Regime::SurfaceSuperconducting
    } else {
        Regime::NormalCandidate
    }
}

/// One row of the measurement table. Quantities that do not apply to a
/// domain are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub kappa: f64,
    pub sigma: f64,
    pub b: f64,
    pub domain: String,
    pub n: usize,
    pub seed: u64,
    pub delta: Option<f64>,
    pub sup_norm: f64,
    pub bulk_sup: Option<f64>,
    pub boundary_sup: Option<f64>,
    pub l4_avg: Option<f64>,
    pub g_upper: Option<f64>,
    /// `|curl A - 1|_2 sigma / (|psi|_inf |psi|_2)`.
    pub curl_ratio: Option<f64>,
    pub h: f64,
    pub energy: f64,
    pub residual_inf: f64,
    pub converged: bool,
    pub regime: Regime,
    pub iterations: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    /// Points whose solve produced non-finite values.
    pub diverged: Vec<(f64, u64)>,
}

/// Worker count from the environment, falling back to the machine's
/// available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&k| k > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every `(b, seed)` pair on a pool of `workers` threads. Records come
/// back in `(b, seed)` order. When `out` is given the table is written to
/// `out/records.csv` and field dumps go under `out/fields`.
pub fn run_sweep(cfg: &ExperimentConfig, out: Option<&Path>, workers: usize) -> Result<SweepOutcome> {
    cfg.validate()?;
    let mut points: Vec<(f64, u64)> = Vec::new();
    let mut bs = cfg.b_list.clone();
    bs.sort_by(f64::total_cmp);
    for &b in &bs {
        for &s in &cfg.seeds {
            points.push((b, s));
        }
    }
    let shared = Shared::new(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<Result<Option<SweepRecord>>> =
        pool.install(|| points.par_iter().map(|&(b, seed)| run_point(cfg, &shared, b, seed, out)).collect());
    let mut records = Vec::with_capacity(points.len());
    let mut diverged = Vec::new();
    for (r, &(b, seed)) in results.into_iter().zip(&points) {
        match r? {
            Some(rec) => records.push(rec),
            None => diverged.push((b, seed)),
        }
    }
    if let Some(dir) = out {
        output::write_csv(&dir.join("records.csv"), &records)?;
    }
    Ok(SweepOutcome { records, diverged })
}

enum Shared {
    Grid(Arc<Grid2D>),
    Cell(cell::MagneticCell),
}

impl Shared {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(match cfg.domain {
            DomainSpec::Disk { radius } => Shared::Grid(Arc::new(Grid2D::disk(radius, cfg.n)?)),
            DomainSpec::Rectangle { lx, ly } => {
                let ny = ((cfg.n - 1) as f64 * ly / lx).round() as usize + 1;
                Shared::Grid(Arc::new(Grid2D::rectangle(lx, ly, cfg.n, ny)?))
            }
            DomainSpec::Cell { flux_quanta, aspect } => Shared::Cell(cell::make_cell(flux_quanta, aspect, cfg.n)?),
        })
    }
}

/// `None` when the solve hit non-finite values.
fn run_point(cfg: &ExperimentConfig, shared: &Shared, b: f64, seed: u64, out: Option<&Path>) -> Result<Option<SweepRecord>> {
    let start = Instant::now();
    let params = cfg.params(b)?;
    let opts = cfg.solve.clone().with_init(InitKind::RandomComplex { seed, amplitude: cfg.init_amplitude });
    let tag = format!("b{b}_s{seed}");
    let dump_dir = out.map(|d| d.join("fields").join(&tag));
    let wants_dump = |converged: bool| match cfg.dump_fields {
        DumpPolicy::Never => false,
        DumpPolicy::Flagged => !converged,
        DumpPolicy::Always => true,
    };
    let base = |h: f64| SweepRecord {
        kappa: cfg.kappa,
        sigma: params.sigma,
        b,
        domain: cfg.domain.label().to_string(),
        n: cfg.n,
        seed,
        delta: None,
        sup_norm: f64::NAN,
        bulk_sup: None,
        boundary_sup: None,
        l4_avg: None,
        g_upper: None,
        curl_ratio: None,
        h,
        energy: f64::NAN,
        residual_inf: f64::NAN,
        converged: false,
        regime: classify_regime(&params),
        iterations: 0,
        wall_time: 0.0,
    };
    match shared {
        Shared::Cell(c) => {
            let opts = SolveOptions { tol_residual: opts.tol_residual.min(CELL_TOL), ..opts };
            let (u, report) = match cell::solve_cell(c, b, &opts) {
                Err(Error::NonFinite { .. }) => return Ok(None),
                other => other?,
            };
            let residual = c.residual(b, &u);
            let converged = residual <= opts.tol_residual;
            if let Some(dir) = dump_dir.filter(|_| wants_dump(converged)) {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                u.write_dump(&dir.join("u"))?;
            }
            Ok(Some(SweepRecord {
                sup_norm: u.sup_norm(),
                energy: report.energy,
                residual_inf: residual,
                converged,
                iterations: report.iterations,
                wall_time: start.elapsed().as_secs_f64(),
                ..base(c.grid().h())
            }))
        }
        Shared::Grid(grid) => {
            let (state, report) = match minimize::minimize(grid, params, &opts) {
                Err(Error::NonFinite { .. }) => return Ok(None),
                other => other?,
            };
            let residual = gl::residual(&state).scaled_inf(&params);
            let converged = residual <= opts.tol_residual;
            if let Some(dir) = dump_dir.filter(|_| wants_dump(converged)) {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                state.psi.write_dump(&dir.join("psi"))?;
                state.a.write_dump(&dir.join("a"))?;
            }
            let m = measure_state(cfg, &state, b)?;
            Ok(Some(SweepRecord {
                delta: Some(cfg.bulk.distance(cfg.kappa)),
                sup_norm: state.psi.sup_norm(),
                bulk_sup: m.bulk_sup,
                boundary_sup: Some(m.boundary_sup),
                l4_avg: m.l4_avg,
                g_upper: Some((1.0 - 1.0 / b).max(0.0).powi(2)),
                curl_ratio: if converged { Some(gl::apriori_diagnostics(&state, opts.tol_residual)?.ratio46()) } else { None },
                energy: report.final_energy,
                residual_inf: residual,
                converged,
                iterations: report.iterations,
                wall_time: start.elapsed().as_secs_f64(),
                ..base(grid.h())
            }))
        }
    }
}

struct Measured {
    bulk_sup: Option<f64>,
    boundary_sup: f64,
    l4_avg: Option<f64>,
}

fn measure_state(cfg: &ExperimentConfig, state: &GLState, b: f64) -> Result<Measured> {
    let bulk_sup = match measure::bulk_sup_norm(state, &cfg.bulk) {
        Ok(v) => Some(v),
        Err(Error::EmptyRegion(_)) => None,
        Err(e) => return Err(e),
    };
    let width = cfg.boundary_width.unwrap_or(2.0 / state.params.coupling().sqrt());
    let boundary_sup = measure::boundary_sup_norm(state, width)?;
    let balls = measure::default_balls(state);
    let l4_avg = measure::g_bounds_check(&state.psi, b, &balls, cfg.ball_tol).ok().map(|g| g.avg);
    Ok(Measured { bulk_sup, boundary_sup, l4_avg })
}
