//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration or validation failure,
//! 3 theorem violation (a deterministic guarantee failed, which always means
//! an implementation bug or a tampered input).

use crate::dp::{discretize, extract_policy, relative_value_iteration, DpError};
use crate::harness::{
    compare_runs, drift_bound_constant, drift_check, monitor_invariants, run_simulation,
    Controller, RunSummary, SimError, SimRun,
};
use crate::scenario::{resolve_scenario, Scenario, ScenarioBundle, ScenarioError};
use crate::selftest::run_lp_selftest;
use crate::trace_io::{average_cost, emit_outputs, read_trace_csv, write_cost_vs_v_csv, EmitError};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use storage_dr_core::ControllerConfig;

#[derive(Debug, Parser)]
#[command(
    name = "storage-dr",
    version,
    about = "Online energy-storage control with demand response: simulation, verification, and benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerArg {
    Esm,
    Dresm,
    Greedy,
}

impl From<ControllerArg> for Controller {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Esm => Controller::Esm,
            ControllerArg::Dresm => Controller::DrEsm,
            ControllerArg::Greedy => Controller::Greedy,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one controller against a scenario and write trace outputs.
    Simulate {
        #[arg(long)]
        controller: ControllerArg,
        /// Scenario file path, or the literal `residential` for the bundled one.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        slots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Control parameter V (= 1/ε).
        #[arg(long)]
        v: f64,
        /// Initial stored energy E(0) in kWh.
        #[arg(long, default_value_t = 0.0)]
        e0: f64,
        /// Output directory for trace.csv, metrics.json, and the energy series.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a V-sweep (with a greedy baseline on the same seed) and print the
    /// comparison table.
    Sweep {
        /// Comma-separated V values, e.g. 2,5,10,20,50.
        #[arg(long = "v-list", value_delimiter = ',', required = true)]
        v_list: Vec<f64>,
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 10_000)]
        slots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        e0: f64,
        #[arg(long, value_enum, default_value_t = ControllerArg::Dresm)]
        controller: ControllerArg,
        /// Optional output directory for avg_cost_vs_v.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark the controller against the RVI gain of a discretized MDP.
    OracleGap {
        #[arg(long)]
        scenario: String,
        #[arg(long = "delta-e")]
        delta_e: f64,
        #[arg(long = "delta-a", default_value_t = 0.5)]
        delta_a: f64,
        #[arg(long)]
        v: f64,
        /// Storage capacity of the benchmark MDP (kWh).
        #[arg(long, default_value_t = 20.0)]
        capacity: f64,
        #[arg(long, default_value_t = 100_000)]
        slots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-run the invariant monitors and the drift check over a trace file.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: String,
        /// Control parameter V the trace was produced with.
        #[arg(long)]
        v: f64,
    },
    /// Randomized self-test of the LP kernel against its brute-force oracle.
    LpSelftest {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Theorem(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(msg) | Self::Theorem(msg) => f.write_str(msg),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Theorem(_) => 3,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<EmitError> for CliError {
    fn from(e: EmitError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match &e {
            SimError::TheoremViolation { .. } | SimError::Model { .. } => {
                Self::Theorem(e.to_string())
            }
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<DpError> for CliError {
    fn from(e: DpError) -> Self {
        match &e {
            DpError::InfeasiblePolicy { .. } => Self::Theorem(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<storage_dr_core::ControllerError> for CliError {
    fn from(e: storage_dr_core::ControllerError) -> Self {
        Self::Config(e.to_string())
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = std::env::var("STORAGE_DR_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            controller,
            scenario,
            slots,
            seed,
            v,
            e0,
            out,
        } => {
            let bundle = resolve_scenario(&scenario)?;
            let cfg = ControllerConfig::new(v, &bundle.params)?;
            let run = run_simulation(controller.into(), &bundle, &cfg, slots, seed, 0, e0)?;
            let files = emit_outputs(&out, &run, &bundle.disutility)?;
            println!(
                "{} on {}: {} slots, avg cost {:.4} ¢/slot, energy in [{:.3}, {:.3}] kWh (capacity {:.3})",
                run.key.controller,
                run.key.scenario_tag,
                run.metrics.slots,
                run.metrics.average_cost,
                run.metrics.min_energy,
                run.metrics.max_energy,
                cfg.capacity,
            );
            println!("trace:   {}", files.trace.display());
            println!("metrics: {}", files.metrics.display());
            println!("series:  {}", files.energy_series.display());
            Ok(())
        }
        Command::Sweep {
            v_list,
            scenario,
            slots,
            seed,
            e0,
            controller,
            out,
        } => {
            let bundle = resolve_scenario(&scenario)?;
            let table = run_sweep(&bundle, controller.into(), &v_list, slots, seed, e0)?;
            print!("{table}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)
                    .map_err(|e| CliError::Config(format!("creating {}: {e}", dir.display())))?;
                let rows: Vec<(f64, f64)> = table
                    .rows
                    .iter()
                    .map(|r| (r.v, r.average_cost))
                    .collect();
                let path = dir.join("avg_cost_vs_v.csv");
                write_cost_vs_v_csv(&path, &rows)?;
                println!("series:  {}", path.display());
            }
            Ok(())
        }
        Command::OracleGap {
            scenario,
            delta_e,
            delta_a,
            v,
            capacity,
            slots,
            seed,
        } => {
            let bundle = resolve_scenario(&scenario)?;
            let cfg = ControllerConfig::new(v, &bundle.params)?;
            let Scenario::Iid(iid) = &bundle.scenario else {
                return Err(CliError::Config(
                    "oracle-gap needs an i.i.d. scenario (finite outcome table)".into(),
                ));
            };
            let mdp = discretize(&bundle.params, iid, &bundle.disutility, capacity, delta_e, delta_a)?;
            let rvi = relative_value_iteration(&mdp, 1e-7, 200_000)?;
            let policy = extract_policy(&mdp, &rvi);
            let policy_stats = crate::dp::rollout_policy(
                &mdp,
                |e_idx, x_idx| *policy.decide(e_idx, x_idx),
                &bundle.params,
                &bundle.disutility,
                slots,
                seed,
                1,
            )?;
            let run = run_simulation(Controller::DrEsm, &bundle, &cfg, slots, seed, 0, 0.0)?;
            let b_eps = drift_bound_constant(&bundle.params) * cfg.epsilon;
            println!(
                "discretized MDP: {} states ({} energy levels x {} outcomes), delta_e {delta_e}, delta_a {delta_a}",
                mdp.n_states(),
                mdp.energy_grid.len(),
                mdp.outcome_samples.len()
            );
            println!(
                "RVI gain g = {:.6} ¢/slot ({} sweeps, span {:.2e})",
                rvi.gain, rvi.iterations, rvi.span
            );
            println!(
                "RVI policy rollout: {:.6} ± {:.6} ¢/slot over {} slots",
                policy_stats.average_cost, policy_stats.std_error, policy_stats.slots
            );
            println!(
                "dresm (V={v}): {:.6} ¢/slot; upper reference g + B·eps = {:.6} (B·eps = {:.6})",
                run.metrics.average_cost,
                rvi.gain + b_eps,
                b_eps
            );
            Ok(())
        }
        Command::Verify { trace, scenario, v } => {
            let bundle = resolve_scenario(&scenario)?;
            let cfg = ControllerConfig::new(v, &bundle.params)?;
            let records = read_trace_csv(&trace, &bundle.disutility)?;
            let report = monitor_invariants(&records, &bundle.params, &cfg);
            let drift = drift_check(&records, &cfg, &bundle.params);
            println!(
                "{}: {} slots, avg cost {:.4} ¢/slot",
                trace.display(),
                records.len(),
                average_cost(&records)
            );
            println!(
                "drift: B = {:.4}, min margin {:.6} ({})",
                drift.b_const,
                drift.min_margin,
                if drift.pass { "pass" } else { "FAIL" }
            );
            if report.is_clean() && drift.pass {
                println!("monitors: clean");
                Ok(())
            } else {
                for viol in report.violations.iter().take(10) {
                    eprintln!("slot {}: {:?}: {}", viol.slot, viol.kind, viol.detail);
                }
                if report.violations.len() > 10 {
                    eprintln!("... {} violations total", report.violations.len());
                }
                Err(CliError::Theorem(format!(
                    "{} monitor violations, drift {}",
                    report.violations.len(),
                    if drift.pass { "pass" } else { "fail" }
                )))
            }
        }
        Command::LpSelftest { n, seed, step } => {
            let report = run_lp_selftest(n, seed, step);
            println!(
                "lp-selftest: {} instances at step {}, max oracle gap {:.3e}, max residual {:.3e}",
                report.instances, report.step, report.max_gap, report.max_residual
            );
            if report.passed() {
                println!("all instances passed");
                Ok(())
            } else {
                for f in report.failures.iter().take(10) {
                    eprintln!("{f}");
                }
                Err(CliError::Theorem(format!(
                    "{} of {} instances failed",
                    report.failures.len(),
                    report.instances
                )))
            }
        }
    }
}

/// Runs the baseline plus one run per V in parallel (stream i+1 for the i-th
/// V, stream 0 for the baseline) and assembles the comparison table.
pub fn run_sweep(
    bundle: &ScenarioBundle,
    controller: Controller,
    v_list: &[f64],
    slots: usize,
    seed: u64,
    e0: f64,
) -> Result<crate::harness::ComparisonTable, CliError> {
    use rayon::prelude::*;
    if v_list.is_empty() {
        return Err(CliError::Config("v-list must not be empty".into()));
    }
    let pool = thread_pool()?;
    let runs: Vec<Result<SimRun, SimError>> = pool.install(|| {
        v_list
            .par_iter()
            .enumerate()
            .map(|(i, &v)| {
                let cfg = ControllerConfig::new(v, &bundle.params)
                    .map_err(|source| SimError::Controller { slot: 0, source })?;
                run_simulation(controller, bundle, &cfg, slots, seed, i as u64 + 1, e0)
            })
            .collect()
    });
    // Greedy baseline on its own stream; V only sets the (unused) config.
    let base_cfg = ControllerConfig::new(v_list[0], &bundle.params)
        .map_err(|source| SimError::Controller { slot: 0, source })?;
    let baseline = run_simulation(Controller::Greedy, bundle, &base_cfg, slots, seed, 0, 0.0)?;
    let mut summaries: Vec<RunSummary> = vec![baseline.summary()];
    for run in runs {
        summaries.push(run?.summary());
    }
    Ok(compare_runs(&summaries)?)
}
