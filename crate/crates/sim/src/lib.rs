//! Simulation side of the storage-dr project: scenario generation with a
//! seedable stream RNG, the rollout harness with per-slot theorem monitors,
//! the dynamic-programming benchmark, trace/plot file formats, and the CLI.
//!
//! The decision rules themselves live in `storage-dr-core`.

// Validation predicates use `!(x >= bound)` so that NaN counts as a violation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dp;
pub mod harness;
pub mod rng;
pub mod scenario;
pub mod selftest;
pub mod trace_io;

pub use harness::{
    compare_runs, drift_bound_constant, drift_check, monitor_invariants, run_simulation,
    run_simulation_with, Controller, Metrics, RunKey, RunSummary, SimError, SimRun, SlotSource,
    TraceRecord,
};
pub use scenario::{
    build_residential_scenario, load_scenario_config, sample_iid, step_markov, IidScenario,
    MarkovScenario, Outcome, Scenario, ScenarioBundle, ScenarioError,
};
