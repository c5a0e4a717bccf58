//! One test per published acceptance property, in report order. Each runs
//! the named check at the default configuration, prints its summary line,
//! and fails when the check fails. Run with `-- --nocapture` to see the
//! lines for passing checks too.

use qbm_harness::checks::{run, CheckCtx};
use qbm_harness::config::RunConfig;

fn run_check(name: &str) {
    let ctx = CheckCtx::new(RunConfig::default());
    let rec = run(name, &ctx).expect("check body errored");
    println!("{}", rec.one_line());
    assert!(rec.pass, "{}", rec.one_line());
}

#[test]
fn c01_moment_oracle() {
    run_check("moment-oracle");
}

#[test]
fn c02_increment_moment() {
    run_check("increment-moment");
}

#[test]
fn c03_density() {
    run_check("density");
}

#[test]
fn c04_holder() {
    run_check("holder");
}

#[test]
fn c05_chen() {
    run_check("chen");
}

#[test]
fn c06_levy_decay() {
    run_check("levy-decay");
}

#[test]
fn c07_second_quantization() {
    run_check("second-quantization");
}

#[test]
fn c08_ito_isometry() {
    run_check("ito-isometry");
}

#[test]
fn c09_ito_correction() {
    run_check("ito-correction");
}

#[test]
fn c10_quadratic_variation() {
    run_check("quadratic-variation");
}

#[test]
fn c11_integral_consistency() {
    run_check("integral-consistency");
}

#[test]
fn c12_rde() {
    run_check("rde");
}

#[test]
fn c13_determinism() {
    run_check("determinism");
}
