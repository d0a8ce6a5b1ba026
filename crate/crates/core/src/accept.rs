//! Acceptance suites: each check reports a measured value, the threshold it
//! is held to, and whether it passed.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cell::{self, CELL_TOL, DEFAULT_ASPECT};
use crate::error::{Error, Result};
use crate::field::{ComplexField, EdgeField, ScalarField};
use crate::gauge;
use crate::gl::{self, GLParams, GLState};
use crate::grid::{DomainKind, Grid2D};
use crate::lll;
use crate::measure::{self, BulkSpec, ScalingPoint};
use crate::minimize::{self, InitKind, SolveOptions, SolveReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Unit,
    Properties,
    TheoremSweep,
    LllSelftest,
    CellCurve,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "unit" => Suite::Unit,
            "properties" => Suite::Properties,
            "theorem-sweep" => Suite::TheoremSweep,
            "lll-selftest" => Suite::LllSelftest,
            "cell-curve" => Suite::CellCurve,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown suite {other:?}; expected unit, properties, theorem-sweep, lll-selftest or cell-curve"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub criterion: u8,
    pub name: String,
    pub measured: f64,
    pub relation: &'static str,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(criterion: u8, name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Check { criterion, name: name.into(), measured, relation: "<=", threshold, pass: measured <= threshold }
    }
    pub fn below(criterion: u8, name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Check { criterion, name: name.into(), measured, relation: "<", threshold, pass: measured < threshold }
    }
    pub fn at_least(criterion: u8, name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Check { criterion, name: name.into(), measured, relation: ">=", threshold, pass: measured >= threshold }
    }
    pub fn above(criterion: u8, name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Check { criterion, name: name.into(), measured, relation: ">", threshold, pass: measured > threshold }
    }

    /// One human-readable line.
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<34} {}  measured {:.6e} {} {:.6e}",
            self.criterion,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.measured,
            self.relation,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub seconds: f64,
}

pub fn run_acceptance(suite: Suite) -> Result<AcceptanceReport> {
    let start = Instant::now();
    let checks = match suite {
        Suite::Unit => unit_checks()?,
        Suite::Properties => {
            let mut c = criterion5()?;
            c.extend(criterion6()?);
            c.extend(hygiene_checks()?);
            c
        }
        Suite::TheoremSweep => {
            let sweep = TheoremSweep::run(&TheoremSweepConfig::default())?;
            let mut c = sweep.criterion1();
            c.push(max_principle(4, "max_principle_disk", sweep.states()));
            c.push(sweep.criterion7());
            c.push(sweep.criterion9());
            c.push(sweep.blow_up_check()?);
            c
        }
        Suite::LllSelftest => criterion8(LLL_N, LLL_H)?,
        Suite::CellCurve => {
            let cells = CellRuns::run()?;
            let mut c = vec![cells.criterion2(), cells.criterion4()];
            c.extend(cells.criterion3());
            c
        }
    };
    let passed = checks.iter().all(|c| c.pass);
    Ok(AcceptanceReport { suite, checks, passed, seconds: start.elapsed().as_secs_f64() })
}

fn disk(n: usize) -> Result<Arc<Grid2D>> {
    Ok(Arc::new(Grid2D::disk(1.0, n)?))
}

fn random_opts(seed: u64) -> SolveOptions {
    SolveOptions::default().with_init(InitKind::RandomComplex { seed, amplitude: 0.3 })
}

/// `|psi|_inf - (1 + 10 h^2)` maximised over converged states; at most zero
/// when the discrete maximum principle holds.
pub fn max_principle(criterion: u8, name: &str, states: impl IntoIterator<Item = (f64, f64)>) -> Check {
    let excess = states.into_iter().map(|(sup, h)| sup - (1.0 + 10.0 * h * h)).fold(f64::NEG_INFINITY, f64::max);
    Check::at_most(criterion, name, excess, 0.0)
}

pub struct TheoremSweepConfig {
    pub n: usize,
    pub kappa: f64,
    pub b_list: Vec<f64>,
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub tol: f64,
}

impl Default for TheoremSweepConfig {
    fn default() -> Self {
        TheoremSweepConfig {
            n: 256,
            kappa: 10.0,
            b_list: vec![1.05, 1.1, 1.2, 1.3, 1.5],
            seeds: vec![0, 1],
            delta: 0.25,
            tol: 1e-6,
        }
    }
}

pub struct SweepPoint {
    pub b: f64,
    pub seed: u64,
    pub state: GLState,
    pub report: SolveReport,
    pub bulk_sup: f64,
    pub boundary_sup: f64,
    pub seconds: f64,
}

/// Disk solves for the scaling law and the diagnostics evaluated on them.
pub struct TheoremSweep {
    pub points: Vec<SweepPoint>,
    pub seconds: f64,
    pub delta: f64,
}

impl TheoremSweep {
    pub fn run(cfg: &TheoremSweepConfig) -> Result<Self> {
        let start = Instant::now();
        let grid = disk(cfg.n)?;
        let spec = BulkSpec::fixed(cfg.delta);
        let mut points = Vec::new();
        for &b in &cfg.b_list {
            for &seed in &cfg.seeds {
                let t = Instant::now();
                let params = GLParams::from_b(cfg.kappa, b)?;
                let opts = SolveOptions { tol_residual: cfg.tol, ..random_opts(seed) };
                let (state, report) = minimize::minimize(&grid, params, &opts)?;
                let bulk_sup = measure::bulk_sup_norm(&state, &spec)?;
                let boundary_sup = measure::boundary_sup_norm(&state, 2.0 / params.coupling().sqrt())?;
                points.push(SweepPoint { b, seed, state, report, bulk_sup, boundary_sup, seconds: t.elapsed().as_secs_f64() });
            }
        }
        Ok(TheoremSweep { points, seconds: start.elapsed().as_secs_f64(), delta: cfg.delta })
    }

    fn converged(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.report.converged)
    }

    /// `(sup norm, h)` of converged states.
    pub fn states(&self) -> Vec<(f64, f64)> {
        self.converged().map(|p| (p.state.psi.sup_norm(), p.state.grid().h())).collect()
    }

    pub fn fit(&self) -> Result<measure::ScalingFit> {
        let pts: Vec<ScalingPoint> = self
            .points
            .iter()
            .map(|p| ScalingPoint { b: p.b, value: p.bulk_sup, converged: p.report.converged })
            .collect();
        measure::fit_scaling(&pts)
    }

    pub fn criterion1(&self) -> Vec<Check> {
        let all = self.points.len() as f64;
        let conv = self.converged().count() as f64;
        let mut out = vec![Check::at_least(1, "converged_fraction", conv / all, 1.0)];
        match self.fit() {
            Ok(fit) => {
                out.push(Check::at_least(1, "slope_lower", fit.slope, 0.35));
                out.push(Check::at_most(1, "slope_upper", fit.slope, 0.65));
                out.push(Check::at_least(1, "r_squared", fit.r2, 0.9));
                out.push(Check::at_most(1, "c2_max", fit.c_max, 5.0));
            }
            Err(_) => out.push(Check::at_least(1, "fit_points", conv, 4.0)),
        }
        out.push(Check::at_most(1, "runtime_seconds", self.seconds, 1800.0));
        out
    }

    /// Largest observed `|curl A - 1|_2 sigma / (|psi|_inf |psi|_2)`.
    pub fn criterion7(&self) -> Check {
        let worst = self
            .converged()
            .map(|p| gl::apriori_diagnostics(&p.state, f64::INFINITY).map(|d| d.ratio46()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        Check::at_most(7, "curl_ratio_max", worst, 10.0)
    }

    /// Smallest `boundary sup / bulk sup` at `b = 1.3`.
    pub fn criterion9(&self) -> Check {
        let worst = self
            .converged()
            .filter(|p| (p.b - 1.3).abs() < 1e-12)
            .map(|p| p.boundary_sup / p.bulk_sup)
            .fold(f64::INFINITY, f64::min);
        Check::at_least(9, "boundary_over_bulk", worst, 2.0)
    }

    /// Residual of the rescaled equation around the disk centre, on the first
    /// converged state at `b = 1.3` (or the first converged state).
    pub fn blow_up_check(&self) -> Result<Check> {
        let p = self
            .converged()
            .find(|p| (p.b - 1.3).abs() < 1e-12)
            .or_else(|| self.converged().next())
            .ok_or_else(|| Error::NotConverged("no converged sweep state".into()))?;
        Ok(Check::at_most(10, "blow_up_residual", blow_up_residual(&p.state)?, 0.1))
    }
}

/// Rescales around the domain centre with a window of three magnetic lengths
/// and a local spacing of three original cells.
pub fn blow_up_residual(state: &GLState) -> Result<f64> {
    let g = state.grid();
    let s = state.params.coupling().sqrt();
    let o = g.origin();
    let centre = [o[0] + 0.5 * (g.nx() - 1) as f64 * g.hx(), o[1] + 0.5 * (g.ny() - 1) as f64 * g.hy()];
    let up = measure::rescale_around_point(state, centre, 3.0, 3.0 * g.h() * s)?;
    Ok(up.residual(state.params.b()))
}

/// Criterion 5: ball averages of `|psi|^4` at `kappa = 10`, `b = 2`.
pub fn criterion5() -> Result<Vec<Check>> {
    let params = GLParams::from_b(10.0, 2.0)?;
    let (state, report) = minimize::minimize(&disk(128)?, params, &random_opts(0))?;
    let balls = measure::default_balls(&state);
    let g = measure::g_bounds_check(&state.psi, 2.0, &balls, 0.15)?;
    Ok(vec![
        Check::at_least(5, "converged", report.converged as u8 as f64, 1.0),
        Check::at_most(5, "l4_average_upper", g.avg, 0.25 * 1.15),
        Check::above(5, "l4_average_lower", g.avg, 0.005),
    ])
}

/// Criterion 6: the normal state is reached well above the third critical
/// field.
pub fn criterion6() -> Result<Vec<Check>> {
    let params = GLParams::new(5.0, 25.0)?;
    let grid = disk(128)?;
    let mut worst: f64 = 0.0;
    let mut all = true;
    for seed in 0..3 {
        let (state, report) = minimize::minimize(&grid, params, &random_opts(seed))?;
        all &= report.converged;
        worst = worst.max(state.psi.sup_norm());
    }
    Ok(vec![
        Check::at_least(6, "converged", all as u8 as f64, 1.0),
        Check::below(6, "sup_norm_max", worst, 1e-3),
    ])
}

fn random_state(grid: &Arc<Grid2D>, params: GLParams, seed: u64) -> Result<GLState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = ComplexField::from_fn(grid.clone(), |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let f = gauge::build_f(grid)?;
    let noise: Vec<f64> = f.values().iter().map(|v| v + 0.3 * rng.gen_range(-1.0..1.0)).collect();
    GLState::new(psi, EdgeField::from_values(grid.clone(), noise)?, params)
}

/// Relative energy change under a random gauge transformation.
pub fn gauge_invariance_error(seed: u64) -> Result<f64> {
    let grid = disk(65)?;
    let params = GLParams::from_b(10.0, 1.2)?;
    let state = random_state(&grid, params, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let eta = ScalarField::from_fn(grid.clone(), |_| rng.gen_range(-PI..PI));
    let (psi, a) = gauge::gauge_transform(&state.psi, &state.a, &eta, params.coupling())?;
    let moved = GLState::new(psi, a, params)?;
    let (e0, e1) = (gl::energy(&state), gl::energy(&moved));
    Ok((e1 - e0).abs() / e0.abs())
}

/// Worst relative mismatch between the analytic gradient and central
/// differences with step `1e-6` over 100 random coordinates. Components
/// smaller than `1e-3` of the largest one are compared against that floor.
pub fn finite_difference_error(seed: u64) -> Result<f64> {
    let grid = disk(33)?;
    let params = GLParams::from_b(10.0, 1.2)?;
    let state = random_state(&grid, params, seed)?;
    let (gpsi, ga) = gl::energy_gradient(&state);
    let scale = gpsi.values().iter().map(|v| v.re.abs().max(v.im.abs())).chain(ga.values().iter().map(|v| v.abs())).fold(0.0, f64::max);
    let floor = 1e-3 * scale;
    let step = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_psi = 2 * grid.n_nodes();
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    while tested < 100 {
        let c = rng.gen_range(0..n_psi + grid.n_edges());
        let perturbed = |d: f64| -> Result<f64> {
            let mut s = state.clone();
            if c < n_psi {
                let k = c / 2;
                if !grid.is_active(k) {
                    return Ok(0.0);
                }
                s.psi.values_mut()[k] += if c % 2 == 0 { Complex64::new(d, 0.0) } else { Complex64::new(0.0, d) };
            } else {
                s.a.values_mut()[c - n_psi] += d;
            }
            Ok(gl::energy(&s))
        };
        let analytic = if c < n_psi {
            let v = gpsi.values()[c / 2];
            if c % 2 == 0 { v.re } else { v.im }
        } else {
            ga.values()[c - n_psi]
        };
        let active = if c < n_psi { grid.is_active(c / 2) } else { grid.edge_weight(c - n_psi) > 0.0 };
        if !active {
            continue;
        }
        let fd = (perturbed(step)? - perturbed(-step)?) / (2.0 * step);
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(floor));
        tested += 1;
    }
    Ok(worst)
}

/// Whether two solves from the same seed agree bit for bit.
pub fn deterministic() -> Result<bool> {
    let grid = disk(49)?;
    let params = GLParams::from_b(5.0, 1.3)?;
    let (a, ra) = minimize::minimize(&grid, params, &random_opts(7))?;
    let (b, rb) = minimize::minimize(&grid, params, &random_opts(7))?;
    Ok(a.psi == b.psi && a.a == b.a && ra == rb)
}

pub fn hygiene_checks() -> Result<Vec<Check>> {
    Ok(vec![
        Check::at_most(10, "gauge_invariance", gauge_invariance_error(3)?, 1e-12),
        Check::at_most(10, "finite_differences", finite_difference_error(4)?, 1e-5),
        Check::at_least(10, "deterministic", deterministic()? as u8 as f64, 1.0),
    ])
}

pub const LLL_N: usize = 401;
pub const LLL_H: f64 = 0.1;

pub fn criterion8(n: usize, h: f64) -> Result<Vec<Check>> {
    Ok(lll::selftest(n, h)?
        .into_iter()
        .map(|r| Check {
            criterion: 8,
            name: r.check.to_string(),
            measured: r.value,
            relation: r.relation,
            threshold: r.threshold,
            pass: r.pass,
        })
        .collect())
}

/// Cell solves behind criteria 2 to 4.
pub struct CellRuns {
    /// `(b, seed, sup norm, converged)` at `b <= 1`.
    pub collapse: Vec<(f64, u64, f64, bool)>,
    pub curve: Vec<cell::CurvePoint>,
    pub h: f64,
}

pub const CELL_N: usize = 32;

impl CellRuns {
    pub fn run() -> Result<Self> {
        let c = cell::make_cell(2, DEFAULT_ASPECT, CELL_N)?;
        let opts = |seed| SolveOptions { tol_residual: CELL_TOL, ..random_opts(seed) };
        let mut collapse = Vec::new();
        for b in [0.5, 0.9, 1.0] {
            for seed in 0..5 {
                let (u, report) = cell::solve_cell(&c, b, &opts(seed))?;
                collapse.push((b, seed, u.sup_norm(), report.converged));
            }
        }
        let curve = cell::sup_norm_curve(&c, &[1.05, 1.1, 1.2, 1.4], &opts(0))?;
        Ok(CellRuns { collapse, curve, h: c.grid().h() })
    }

    pub fn criterion2(&self) -> Check {
        let worst = self
            .collapse
            .iter()
            .map(|&(_, _, sup, conv)| if conv { sup } else { f64::INFINITY })
            .fold(0.0, f64::max);
        Check::at_most(2, "collapse_sup_norm_max", worst, 1e-3)
    }

    pub fn criterion3(&self) -> Vec<Check> {
        let excess = self
            .curve
            .iter()
            .map(|p| if p.converged { p.sup_norm - 1f64.min(5.0 * (p.b - 1.0).sqrt()) } else { f64::INFINITY })
            .fold(f64::NEG_INFINITY, f64::max);
        let smallest = self.curve.iter().map(|p| p.sup_norm).fold(f64::INFINITY, f64::min);
        let pts: Vec<ScalingPoint> =
            self.curve.iter().map(|p| ScalingPoint { b: p.b, value: p.sup_norm, converged: p.converged }).collect();
        let mut out = vec![
            Check::above(3, "nontrivial_sup_norm_min", smallest, 1e-3),
            Check::at_most(3, "bound_excess_max", excess, 0.0),
        ];
        match measure::fit_scaling(&pts) {
            Ok(fit) => {
                out.push(Check::at_least(3, "slope_lower", fit.slope, 0.35));
                out.push(Check::at_most(3, "slope_upper", fit.slope, 0.65));
            }
            Err(_) => out.push(Check::at_least(3, "fit_points", pts.iter().filter(|p| p.converged).count() as f64, 4.0)),
        }
        out
    }

    pub fn criterion4(&self) -> Check {
        let states = self
            .collapse
            .iter()
            .filter(|c| c.3)
            .map(|c| (c.2, self.h))
            .chain(self.curve.iter().filter(|p| p.converged).map(|p| (p.sup_norm, self.h)));
        max_principle(4, "max_principle_cell", states)
    }
}

/// Fast checks for a fresh checkout.
pub fn unit_checks() -> Result<Vec<Check>> {
    let mut out = hygiene_checks()?;
    let c = cell::make_cell(2, DEFAULT_ASPECT, 16)?;
    out.push(Check::at_most(0, "cell_cocycle", c.cocycle_defect(), 1e-12));
    out.push(Check::at_most(0, "cell_eigenvalue_offset", (c.lowest_eigenvalue() - 1.0).abs(), 0.02));
    let zero = ComplexField::zeros(c.grid().clone());
    out.push(Check::at_most(0, "cell_zero_residual", c.residual(1.5, &zero), 0.0));
    let k = lll::kernel([0.3, 0.7], [0.3, 0.7]);
    out.push(Check::at_most(0, "kernel_diagonal", (k - 1.0 / (2.0 * PI)).norm(), 1e-12));
    let synthetic: Vec<ScalingPoint> =
        [0.05, 0.1, 0.2, 0.4].iter().map(|&x| ScalingPoint { b: 1.0 + x, value: x.sqrt(), converged: true }).collect();
    out.push(Check::at_most(0, "fit_synthetic_slope", (measure::fit_scaling(&synthetic)?.slope - 0.5).abs(), 1e-12));
    let g = Arc::new(Grid2D::new(DomainKind::Disk, 1.0, 33)?);
    let normal = GLState::normal(&g, GLParams::from_b(10.0, 1.2)?)?;
    out.push(Check::at_most(0, "normal_state_residual", gl::residual(&normal).scaled_inf(&normal.params), 1e-10));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names() {
        for s in ["unit", "properties", "theorem-sweep", "lll-selftest", "cell-curve"] {
            let suite: Suite = s.parse().unwrap();
            assert_eq!(serde_json::to_value(suite).unwrap(), serde_json::json!(s));
        }
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn check_relations() {
        assert!(Check::at_most(1, "x", 1.0, 1.0).pass);
        assert!(!Check::below(1, "x", 1.0, 1.0).pass);
        assert!(!Check::at_least(1, "x", f64::NAN, 0.0).pass);
        assert!(Check::above(1, "x", 2.0, 1.0).line().contains("PASS"));
        assert!(max_principle(4, "m", [(1.0, 0.1), (1.05, 0.1)]).pass);
        assert!(!max_principle(4, "m", [(1.2, 0.1)]).pass);
    }
}
