//! Fixtures shared by the benchmarks.

use heatbridge::bridge::{BridgeConfig, BridgeSolver};
use heatbridge::control::Scenario;
use heatbridge::forward::{sample_noise, NoiseEnsemble, TimeGrid};
use heatbridge::riccati::FbsdeSolution;
use heatbridge::scenarios::{build, lookup, ScenarioParams};
use nalgebra::DMatrix;

pub const N_STEPS: usize = 200;

pub fn grid() -> TimeGrid {
    TimeGrid::new(1.0, N_STEPS).expect("valid grid")
}

pub fn scenario(name: &str, n_modes: usize) -> Scenario {
    let params = ScenarioParams {
        n_modes,
        ..ScenarioParams::default()
    };
    build(name, &params).expect("registered scenario")
}

pub fn noise(n_modes: usize, n_paths: usize) -> NoiseEnsemble {
    sample_noise(grid(), n_modes, n_paths, 7).expect("valid noise")
}

/// `(gain, Q, P_T)` of the linear-quadratic problem.
pub fn riccati_inputs(s: &Scenario) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = s.n_modes();
    (s.gain(), DMatrix::identity(n, n), DMatrix::identity(n, n))
}

/// Solver and starting iterate for a single Picard step.
pub fn picard_fixture<'a>(s: &'a Scenario, noise: &NoiseEnsemble) -> (BridgeSolver<'a>, FbsdeSolution) {
    let config = BridgeConfig {
        features: lookup(&s.name).expect("registered scenario").features,
        ..BridgeConfig::default()
    };
    let solver = BridgeSolver::new(s, grid(), config).expect("solver");
    let start = solver.linear_solution(noise).expect("linear solution");
    (solver, start)
}
