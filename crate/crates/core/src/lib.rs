//! Per-slot decision kernel for energy storage control with demand response.
//!
//! The crate holds everything a controller device needs at runtime and nothing
//! else: the physical model ([`model`]), the exact per-slot storage LP solver
//! ([`lp`]), and the online decision rules ([`controller`]). It is `no_std`
//! (with `alloc`) and has no dependencies; simulation, scenario generation,
//! file formats, and the CLI live in the companion `storage-dr-sim` crate.

#![cfg_attr(not(test), no_std)]
// Validation predicates use `!(x >= bound)` so that NaN counts as a violation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod controller;
pub mod lp;
pub mod model;

pub use controller::{
    compute_theta, dresm_check_against_oracle, dresm_decide, dresm_lipschitz, dresm_objective,
    dresm_oracle, dresm_weights, esm_decide, esm_weights, greedy_decide, ControllerConfig,
    ControllerError, DrEsmWeights, EsmWeights,
};
pub use lp::{
    brute_force_lp, feasibility_residual, oracle_slack, solve_storage_lp, verify_optimality,
    LPSolution, LpError, StorageLP,
};
pub use model::{
    apply_storage_dynamics, check_feasibility, disutility, positive_part, residual_load,
    slot_cost, validate_params, BatteryState, ControlAction, CostMode, DisutilitySpec,
    ExogenousSample, ModelError, ParamViolation, StateDisutility, StateId, SystemParams,
    Violation, FEAS_TOL, TAU_EQ,
};
