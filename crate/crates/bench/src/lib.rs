//! Shared fixtures for the benchmarks.

use rdsym::catalog::{instantiate, Instance, ParameterAssignment};
use rdsym::engine::SamplingConfig;
use rdsym::pdelab::{solution_grid, CompiledSolution, Grid1D, Kinetics};
use rdsym::reduction::{predator_prey_solution, ClosedFormSolution, PredatorPreyParams};

/// Catalog case 5 with fixed parameters.
pub fn case5() -> Instance {
    instantiate(5, &ParameterAssignment::new().with("d", 2.0)).expect("case 5 instantiates")
}

pub fn sampling(samples: usize) -> SamplingConfig {
    SamplingConfig { samples, seed: 7, ..SamplingConfig::default() }
}

pub fn reference_solution() -> ClosedFormSolution {
    predator_prey_solution(&PredatorPreyParams::default()).expect("reference parameters are valid")
}

/// Kinetics, exact solution and grid for the reference predator-prey run.
pub fn reference_run(n_cells: usize, dt: f64, t_end: f64) -> (Kinetics, CompiledSolution, Grid1D) {
    let sol = reference_solution();
    let kin = Kinetics::from_canonical(&sol.system).expect("numeric system");
    let exact = CompiledSolution::new(&sol).expect("compiles");
    let grid = solution_grid(&sol, n_cells, dt, t_end).expect("finite interval");
    (kin, exact, grid)
}
