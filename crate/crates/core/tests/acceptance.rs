//! One test per acceptance criterion. Each prints its checks as
//! `criterion N name PASS|FAIL measured ...` lines and fails when any check
//! does.

use std::sync::OnceLock;

use gl_lab::accept::{self, Check, CellRuns, TheoremSweep, TheoremSweepConfig};

fn sweep() -> &'static TheoremSweep {
    static SWEEP: OnceLock<TheoremSweep> = OnceLock::new();
    SWEEP.get_or_init(|| TheoremSweep::run(&TheoremSweepConfig::default()).expect("theorem sweep"))
}

fn cells() -> &'static CellRuns {
    static CELLS: OnceLock<CellRuns> = OnceLock::new();
    CELLS.get_or_init(|| CellRuns::run().expect("cell runs"))
}

fn report(criterion: u8, checks: &[Check]) {
    for c in checks {
        println!("{}", c.line());
    }
    let pass = checks.iter().all(|c| c.pass);
    println!("criterion {criterion:>2} {}", if pass { "PASS" } else { "FAIL" });
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    assert!(failed.is_empty(), "criterion {criterion} failed: {failed:?}");
}

#[test]
fn criterion_01_bulk_scaling() {
    let s = sweep();
    for p in &s.points {
        println!(
            "  b={:.2} seed={} bulk={:.4e} boundary={:.4e} residual={:.2e} converged={} iterations={} seconds={:.1}",
            p.b, p.seed, p.bulk_sup, p.boundary_sup, p.report.final_residual_inf, p.report.converged,
            p.report.iterations, p.seconds
        );
    }
    report(1, &s.criterion1());
}

#[test]
fn criterion_02_cell_collapse() {
    report(2, &[cells().criterion2()]);
}

#[test]
fn criterion_03_cell_bound() {
    let c = cells();
    for p in &c.curve {
        println!("  b={:.2} sup={:.4e} residual={:.2e} converged={}", p.b, p.sup_norm, p.residual_inf, p.converged);
    }
    report(3, &c.criterion3());
}

#[test]
fn criterion_04_maximum_principle() {
    let disk = accept::max_principle(4, "max_principle_disk", sweep().states());
    report(4, &[disk, cells().criterion4()]);
}

#[test]
fn criterion_05_ball_averages() {
    report(5, &accept::criterion5().expect("criterion 5 solve"));
}

#[test]
fn criterion_06_strong_field_normal_state() {
    report(6, &accept::criterion6().expect("criterion 6 solves"));
}

#[test]
fn criterion_07_curl_estimate() {
    report(7, &[sweep().criterion7()]);
}

#[test]
fn criterion_08_lll_projector() {
    report(8, &accept::criterion8(accept::LLL_N, accept::LLL_H).expect("lll selftest"));
}

#[test]
fn criterion_09_surface_versus_bulk() {
    report(9, &[sweep().criterion9()]);
}

#[test]
fn criterion_10_hygiene() {
    let mut checks = accept::hygiene_checks().expect("hygiene");
    checks.push(sweep().blow_up_check().expect("blow-up"));
    report(10, &checks);
}
