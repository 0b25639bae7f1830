//! Monte-Carlo coverage studies over the simulation grid.

mod coverage;
mod scenario;

pub use coverage::{
    coverage_type1, coverage_type2, coverage_type3, coverage_type4, run_grid, run_prepared, run_scenario,
    run_scenario_seeded, scenario_seed, CoverageMethod, CoverageReport, Fit, GridOutcome, MethodCoverage, Query,
    ReplicateRecord, MAX_FAILURE_RATE,
};
pub use scenario::{
    default_methods, generate_dataset, signal_seed, CoverageType, Method, PreparedScenario, ScenarioConfig, GRID_ALPHA,
    GRID_N, GRID_P, GRID_SN, SIGNAL_DRAWS,
};
