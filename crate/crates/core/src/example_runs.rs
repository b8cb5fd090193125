//! Every program under examples/ must run to completion.

#[allow(dead_code)]
mod simulate_ctmc {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/simulate_ctmc.rs"));
}

#[test]
fn simulate_ctmc_example_runs() {
    simulate_ctmc::run_example().expect("simulate_ctmc example should run");
}

#[allow(dead_code)]
mod arrival_drift {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/arrival_drift.rs"));
}

#[test]
fn arrival_drift_example_runs() {
    arrival_drift::run_example().expect("arrival_drift example should run");
}

#[allow(dead_code)]
mod covariance_phi {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/covariance_phi.rs"));
}

#[test]
fn covariance_phi_example_runs() {
    covariance_phi::run_example().expect("covariance_phi example should run");
}

#[allow(dead_code)]
mod linearized_drift {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/linearized_drift.rs"));
}

#[test]
fn linearized_drift_example_runs() {
    linearized_drift::run_example().expect("linearized_drift example should run");
}

#[allow(dead_code)]
mod fluid_fixed_point {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/fluid_fixed_point.rs"));
}

#[test]
fn fluid_fixed_point_example_runs() {
    fluid_fixed_point::run_example().expect("fluid_fixed_point example should run");
}

#[allow(dead_code)]
mod diffusion_path {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/diffusion_path.rs"));
}

#[test]
fn diffusion_path_example_runs() {
    diffusion_path::run_example().expect("diffusion_path example should run");
}

#[allow(dead_code)]
mod coverage_cell {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/coverage_cell.rs"));
}

#[test]
fn coverage_cell_example_runs() {
    coverage_cell::run_example().expect("coverage_cell example should run");
}

#[allow(dead_code)]
mod bench_timing {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/bench_timing.rs"));
}

#[test]
fn bench_timing_example_runs() {
    bench_timing::run_example().expect("bench_timing example should run");
}

#[allow(dead_code)]
mod lln_study {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/lln_study.rs"));
}

#[test]
fn lln_study_example_runs() {
    lln_study::run_example().expect("lln_study example should run");
}

#[allow(dead_code)]
mod covariation {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/covariation.rs"));
}

#[test]
fn covariation_example_runs() {
    covariation::run_example().expect("covariation example should run");
}

#[allow(dead_code)]
mod cli_config {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/cli_config.rs"));
}

#[test]
fn cli_config_example_runs() {
    cli_config::run_example().expect("cli_config example should run");
}
