//! Acceptance suite. One test per criterion; each prints a PASS/FAIL line
//! with the measured quantities.
//!
//! Run with `cargo test -p storage-dr-sim --test acceptance -- --nocapture`.

mod common;

use common::{report, scenarios_dir};
use rayon::prelude::*;
use std::time::Instant;
use storage_dr_core::{
    check_feasibility, dresm_decide, dresm_lipschitz, dresm_objective, dresm_oracle,
    ControllerConfig, DisutilitySpec, ExogenousSample, StateDisutility, StateId, SystemParams,
    Violation,
};
use storage_dr_sim::dp::{batch_stats, discretize, relative_value_iteration};
use storage_dr_sim::harness::{
    drift_bound_constant, drift_check, monitor_invariants, run_simulation, run_simulation_with,
    Controller, RunKey, SimRun, SlotSource,
};
use storage_dr_sim::rng::StreamRng;
use storage_dr_sim::scenario::{
    build_residential_scenario, load_scenario_config, residential_disutility, residential_params,
    IidScenario, Outcome, Scenario, ScenarioBundle,
};
use storage_dr_sim::selftest::run_lp_selftest;
use storage_dr_sim::trace_io::average_cost;

const V_GRID: [f64; 5] = [2.0, 5.0, 10.0, 20.0, 50.0];
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const SLOTS: usize = 10_000;

fn residential_run(v: f64, seed: u64, controller: Controller) -> SimRun {
    let bundle = build_residential_scenario(&Default::default()).unwrap();
    let cfg = ControllerConfig::new(v, &bundle.params).unwrap();
    run_simulation(controller, &bundle, &cfg, SLOTS, seed, 0, 0.0)
        .unwrap_or_else(|e| panic!("run aborted (V={v}, seed={seed}): {e}"))
}

/// Criterion 1: deterministic sample-path bounds on the bundled scenario,
/// every (V, seed) pair, 1e-9 slack, under 60 s total.
#[test]
fn criterion_1_sample_path_bounds() {
    let start = Instant::now();
    let params = residential_params();
    let cases: Vec<(f64, u64)> = V_GRID
        .iter()
        .flat_map(|&v| SEEDS.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<(f64, u64, usize, f64)> = cases
        .par_iter()
        .map(|&(v, seed)| {
            let run = residential_run(v, seed, Controller::DrEsm);
            let cfg = ControllerConfig::new(v, &params).unwrap();
            let monitor = monitor_invariants(&run.trace, &params, &cfg);
            (v, seed, monitor.violations.len(), run.metrics.max_energy)
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let total_violations: usize = results.iter().map(|r| r.2).sum();
    let max_e = results.iter().map(|r| r.3).fold(0.0f64, f64::max);
    let pass = total_violations == 0 && elapsed < 60.0;
    report(
        "1 (sample-path bounds)",
        pass,
        &format!(
            "{} runs x {SLOTS} slots, {total_violations} violations, peak E {max_e:.2} kWh, {elapsed:.1} s",
            results.len()
        ),
    );
}

/// Criterion 2: the per-slot drift inequality with B = 158.58 for the bundled
/// parameters, 1e-6 absolute, across the same run set as criterion 1.
#[test]
fn criterion_2_drift_inequality() {
    let params = residential_params();
    let b = drift_bound_constant(&params);
    assert!(
        (b - 158.58).abs() < 1e-9,
        "B must equal 158.58 for these parameters, got {b}"
    );
    let cases: Vec<(f64, u64)> = V_GRID
        .iter()
        .flat_map(|&v| SEEDS.iter().map(move |&s| (v, s)))
        .collect();
    let worst: Vec<(f64, u64, bool, f64)> = cases
        .par_iter()
        .map(|&(v, seed)| {
            let run = residential_run(v, seed, Controller::DrEsm);
            let cfg = ControllerConfig::new(v, &params).unwrap();
            let drift = drift_check(&run.trace, &cfg, &params);
            (v, seed, drift.pass, drift.min_margin)
        })
        .collect();
    let min_margin = worst.iter().map(|w| w.3).fold(f64::INFINITY, f64::min);
    let pass = worst.iter().all(|w| w.2);
    report(
        "2 (drift inequality)",
        pass,
        &format!(
            "B = {b}, min margin {min_margin:.6} over {} runs (tolerance 1e-6)",
            worst.len()
        ),
    );
}

/// Criterion 3: LP exactness on 1000 seeded instances against the 0.01-step
/// brute-force oracle, with the optimality certificate, under 30 s.
#[test]
fn criterion_3_lp_exactness() {
    let start = Instant::now();
    let result = run_lp_selftest(1000, 42, 0.01);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = result.passed() && elapsed < 30.0;
    report(
        "3 (LP exactness)",
        pass,
        &format!(
            "{} instances, {} failures, max oracle gap {:.3e}, max residual {:.3e}, {elapsed:.1} s",
            result.instances,
            result.failures.len(),
            result.max_gap,
            result.max_residual
        ),
    );
}

/// Criterion 4: the DR-ESM solver against its grid oracle on 200 seeded
/// instances at step 0.01, under 60 s. The exact solver may not be worse than
/// any oracle grid point (1e-6), may not beat the oracle by more than the
/// oracle's resolution error `Lipschitz·step + 1e-6`, and its action must be
/// feasible for the per-slot program.
#[test]
fn criterion_4_dresm_exactness() {
    let start = Instant::now();
    let params = residential_params();
    let residential_spec = residential_disutility();
    let mut rng = StreamRng::new(4242, 0);
    let step = 0.01;
    let mut worst_above = f64::NEG_INFINITY;
    let mut worst_below = f64::NEG_INFINITY;
    let mut failures = 0usize;
    for i in 0..200 {
        let v = 1.0 + 49.0 * rng.unit_f64();
        let cfg = ControllerConfig::new(v, &params).unwrap();
        let spec = if i % 2 == 0 {
            residential_spec.clone()
        } else {
            DisutilitySpec {
                states: vec![StateDisutility {
                    name: "R".to_string(),
                    beta: 3.0 * rng.unit_f64(),
                    target: params.l_max * rng.unit_f64(),
                }],
            }
        };
        let x = ExogenousSample {
            p: params.p_max * rng.unit_f64(),
            q: params.q_max * rng.unit_f64(),
            r: params.r_max * rng.unit_f64(),
            s: StateId(if i % 2 == 0 { rng.index(2) } else { 0 }),
            exo_load: None,
        };
        let e = cfg.capacity * rng.unit_f64();
        let decided = dresm_decide(e, &x, &cfg, &params, &spec).unwrap();
        let scanned = dresm_oracle(e, &x, &cfg, &params, &spec, step).unwrap();
        let f_decided = dresm_objective(&decided, e, &x, &cfg, &params, &spec).unwrap();
        let f_scanned = dresm_objective(&scanned, e, &x, &cfg, &params, &spec).unwrap();
        let lipschitz = dresm_lipschitz(e, &x, &cfg, &params, &spec).unwrap();
        // The energy-availability check is a trajectory property, not part of
        // the per-slot program; every other constraint must hold.
        let lp_violations: Vec<Violation> = check_feasibility(&decided, &x, f64::INFINITY, &params)
            .into_iter()
            .collect();
        worst_above = worst_above.max(f_decided - f_scanned);
        worst_below = worst_below.max(f_scanned - lipschitz * step - 1e-6 - f_decided);
        if f_decided > f_scanned + 1e-6
            || f_decided < f_scanned - lipschitz * step - 1e-6
            || !lp_violations.is_empty()
        {
            failures += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = failures == 0 && elapsed < 60.0;
    report(
        "4 (DR-ESM solver exactness)",
        pass,
        &format!(
            "200 instances, {failures} failures, max (decided − oracle) {worst_above:.3e}, {elapsed:.1} s"
        ),
    );
}

/// Criterion 5: optimality-gap sandwich against the discretized-MDP gain on
/// the small synthetic instance (unit storage efficiencies so the pinned
/// 0.5 kWh / 0.5 kW grids represent storage moves exactly):
/// `g − δ ≤ cost ≤ g + B·ε + δ` with `δ = 0.05·|g| + 3·SE`, V ∈ {5, 20},
/// under 5 minutes.
#[test]
fn criterion_5_optimality_gap() {
    let start = Instant::now();
    let params = SystemParams {
        eta_e: 1.0,
        eta_i: 1.0,
        c_grid: 4.0,
        c_char: 2.0,
        c_dis: 2.0,
        l_max: 2.5,
        r_max: 2.0,
        p_max: 10.0,
        q_max: 10.0,
    };
    let disutility = DisutilitySpec {
        states: vec![StateDisutility {
            name: "S".to_string(),
            beta: 1.0,
            target: 2.0,
        }],
    };
    let mut outcomes = Vec::new();
    for &p in &[4.0, 10.0] {
        for &r in &[0.0, 2.0] {
            outcomes.push(Outcome {
                sample: ExogenousSample {
                    p,
                    q: p,
                    r,
                    s: StateId(0),
                    exo_load: None,
                },
                prob: 0.25,
            });
        }
    }
    let scenario = IidScenario::new(outcomes, &params).unwrap();
    let bundle = ScenarioBundle {
        scenario: Scenario::Iid(scenario.clone()),
        params,
        disutility: disutility.clone(),
        tag: "gap-benchmark".to_string(),
    };
    let mdp = discretize(&params, &scenario, &disutility, 20.0, 0.5, 0.5).unwrap();
    let rvi = relative_value_iteration(&mdp, 1e-7, 500_000).unwrap();
    let g = rvi.gain;
    let b = drift_bound_constant(&params);
    let mut pass = true;
    let mut details = vec![format!("g = {g:.4}")];
    for v in [5.0, 20.0] {
        let cfg = ControllerConfig::new(v, &params).unwrap();
        let run = run_simulation(Controller::DrEsm, &bundle, &cfg, 100_000, 1, 0, 0.0).unwrap();
        let costs: Vec<f64> = run.trace.iter().map(|r| r.cost).collect();
        let stats = batch_stats(&costs);
        let slack = 0.05 * g.abs() + 3.0 * stats.std_error;
        let upper = g + b * cfg.epsilon + slack;
        let lower = g - slack;
        let ok = stats.average_cost >= lower && stats.average_cost <= upper;
        pass &= ok;
        details.push(format!(
            "V={v}: cost {:.4} in [{lower:.4}, {upper:.4}] ({})",
            stats.average_cost,
            if ok { "ok" } else { "OUT" }
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 300.0;
    details.push(format!("{elapsed:.1} s"));
    report("5 (optimality gap)", pass, &details.join("; "));
}

/// Criterion 6: trend reproduction on the bundled approximation. The
/// published exact numbers are not reproducible (the original hourly data is
/// approximated); asserted are: the controller beats the storage-free
/// baseline for every V, savings above 50% for V ≥ 5, and average cost
/// non-increasing in V within 3 combined standard errors. The published
/// reference values are printed alongside.
#[test]
fn criterion_6_residential_trend() {
    let bundle = build_residential_scenario(&Default::default()).unwrap();
    let greedy = {
        let cfg = ControllerConfig::new(5.0, &bundle.params).unwrap();
        run_simulation(Controller::Greedy, &bundle, &cfg, SLOTS, 1, 0, 0.0).unwrap()
    };
    let base = greedy.metrics.average_cost;
    let runs: Vec<(f64, f64, f64)> = V_GRID
        .par_iter()
        .map(|&v| {
            let cfg = ControllerConfig::new(v, &bundle.params).unwrap();
            let run = run_simulation(Controller::DrEsm, &bundle, &cfg, SLOTS, 1, 0, 0.0).unwrap();
            let costs: Vec<f64> = run.trace.iter().map(|r| r.cost).collect();
            let stats = batch_stats(&costs);
            (v, stats.average_cost, stats.std_error)
        })
        .collect();
    let mut pass = true;
    let mut details = vec![format!("greedy {base:.3}")];
    for &(v, cost, _) in &runs {
        let savings = (base - cost) / base.abs() * 100.0;
        let beats = cost < base;
        let strong = savings > 50.0;
        pass &= beats;
        if v >= 5.0 {
            pass &= strong;
        }
        details.push(format!("V={v}: {cost:.3} ({savings:.0}%)"));
    }
    for pair in runs.windows(2) {
        let (va, ca, sa) = pair[0];
        let (vb, cb, sb) = pair[1];
        let band = 3.0 * (sa * sa + sb * sb).sqrt();
        if cb > ca + band {
            pass = false;
            details.push(format!(
                "cost increased from V={va} ({ca:.3}) to V={vb} ({cb:.3}) beyond {band:.3}"
            ));
        }
    }
    details.push("published reference: savings 64%-136%, 8.24¢ down to -1.61¢ at V=5".to_string());
    report("6 (trend reproduction)", pass, &details.join("; "));
}

// ---------------------------------------------------------------------------
// Criterion 7: adversarial generators
// ---------------------------------------------------------------------------

/// Alternating worst-case extremes: price flips between the bounds, renewable
/// alternates between 0 and its maximum, the comfort state alternates.
struct FlippingAdversary {
    params: SystemParams,
    with_load: bool,
}

impl SlotSource for FlippingAdversary {
    fn next_sample(&mut self, t: usize, _e: f64) -> ExogenousSample {
        let hi = t.is_multiple_of(2);
        ExogenousSample {
            p: if hi { self.params.p_max } else { 0.0 },
            q: if hi { 0.0 } else { self.params.q_max },
            r: if hi { 0.0 } else { self.params.r_max },
            s: StateId(t % 2),
            exo_load: self
                .with_load
                .then_some(if hi { self.params.l_max } else { 0.0 }),
        }
    }
}

/// State-dependent adversary: tempts the controller with the most dangerous
/// prices for its current energy level (sell-high pressure near empty,
/// buy-cheap pressure near full, maximum load when low).
struct StateAwareAdversary {
    params: SystemParams,
    theta: f64,
    with_load: bool,
}

impl SlotSource for StateAwareAdversary {
    fn next_sample(&mut self, t: usize, e: f64) -> ExogenousSample {
        let low_mark = self.params.eta_e * self.params.l_max.min(self.params.c_dis);
        let low = e < low_mark;
        let high = e > self.theta;
        ExogenousSample {
            p: if high { 0.0 } else { self.params.p_max },
            q: if low { self.params.q_max } else { 0.0 },
            r: if high { self.params.r_max } else { 0.0 },
            s: StateId(t % 2),
            exo_load: self
                .with_load
                .then_some(if low { self.params.l_max } else { 0.0 }),
        }
    }
}

/// Constant maximum pressure on every bound simultaneously.
struct SaturatingAdversary {
    params: SystemParams,
    with_load: bool,
}

impl SlotSource for SaturatingAdversary {
    fn next_sample(&mut self, _t: usize, _e: f64) -> ExogenousSample {
        ExogenousSample {
            p: self.params.p_max,
            q: self.params.q_max,
            r: self.params.r_max,
            s: StateId(0),
            exo_load: self.with_load.then_some(self.params.l_max),
        }
    }
}

#[test]
fn criterion_7_adversarial_robustness() {
    let params = residential_params();
    let disutility = residential_disutility();
    let mut total_runs = 0usize;
    let mut total_violations = 0usize;
    for &v in &V_GRID {
        let cfg = ControllerConfig::new(v, &params).unwrap();
        for controller in [Controller::Esm, Controller::DrEsm] {
            let with_load = controller == Controller::Esm;
            for e0 in [0.0, cfg.capacity] {
                let sources: Vec<Box<dyn SlotSource>> = vec![
                    Box::new(FlippingAdversary { params, with_load }),
                    Box::new(StateAwareAdversary {
                        params,
                        theta: cfg.theta,
                        with_load,
                    }),
                    Box::new(SaturatingAdversary { params, with_load }),
                ];
                for mut source in sources {
                    let key = RunKey {
                        controller: controller.name().to_string(),
                        v,
                        seed: 0,
                        scenario_tag: "adversarial".to_string(),
                    };
                    let run = run_simulation_with(
                        controller,
                        source.as_mut(),
                        &params,
                        &cfg,
                        &disutility,
                        SLOTS,
                        e0,
                        key,
                    )
                    .unwrap_or_else(|e| panic!("adversarial run aborted (V={v}): {e}"));
                    let monitor = monitor_invariants(&run.trace, &params, &cfg);
                    total_violations += monitor.violations.len();
                    total_runs += 1;
                }
            }
        }
    }
    report(
        "7 (adversarial sample paths)",
        total_violations == 0,
        &format!("{total_runs} adversarial runs x {SLOTS} slots, {total_violations} violations"),
    );
}

/// Criterion 8: the bounds hold verbatim on the 4-state Markov scenario and
/// the controller still beats the storage-free baseline there.
#[test]
fn criterion_8_markov_mode() {
    let bundle = load_scenario_config(&scenarios_dir().join("markov4.json")).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for &v in &V_GRID {
        let cfg = ControllerConfig::new(v, &bundle.params).unwrap();
        let run = run_simulation(Controller::DrEsm, &bundle, &cfg, SLOTS, 1, 0, 0.0)
            .unwrap_or_else(|e| panic!("markov run aborted (V={v}): {e}"));
        let monitor = monitor_invariants(&run.trace, &bundle.params, &cfg);
        let drift = drift_check(&run.trace, &cfg, &bundle.params);
        if !monitor.is_clean() || !drift.pass {
            pass = false;
            details.push(format!(
                "V={v}: {} violations, drift {}",
                monitor.violations.len(),
                drift.pass
            ));
        }
    }
    let cfg = ControllerConfig::new(5.0, &bundle.params).unwrap();
    let dresm = run_simulation(Controller::DrEsm, &bundle, &cfg, SLOTS, 1, 0, 0.0).unwrap();
    let greedy = run_simulation(Controller::Greedy, &bundle, &cfg, SLOTS, 1, 0, 0.0).unwrap();
    let beats = dresm.metrics.average_cost < greedy.metrics.average_cost;
    pass &= beats;
    details.push(format!(
        "dresm {:.3} vs greedy {:.3} ¢/slot",
        dresm.metrics.average_cost, greedy.metrics.average_cost
    ));
    report("8 (Markov mode)", pass, &details.join("; "));
}

/// Not a numbered criterion: the emitted trace must reproduce the metrics.
#[test]
fn emitted_trace_recomputes_average_cost() {
    let run = residential_run(5.0, 1, Controller::DrEsm);
    let dir = tempfile::tempdir().unwrap();
    let disutility = residential_disutility();
    let files =
        storage_dr_sim::trace_io::emit_outputs(dir.path(), &run, &disutility).unwrap();
    let parsed = storage_dr_sim::trace_io::read_trace_csv(&files.trace, &disutility).unwrap();
    let avg = average_cost(&parsed);
    let rel = (avg - run.metrics.average_cost).abs() / (1.0 + run.metrics.average_cost.abs());
    assert!(rel <= 1e-9, "re-computed average differs: {rel}");
}
