//! Shared fixtures for the integration suites.

use std::path::PathBuf;
use storage_dr_sim::scenario::{IidScenario, Outcome, Scenario, ScenarioBundle};
use storage_dr_core::{
    DisutilitySpec, ExogenousSample, StateDisutility, StateId, SystemParams,
};

/// Repo-level scenarios directory.
#[allow(dead_code)]
pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Small synthetic benchmark instance: two price levels, two renewable
/// levels, one comfort state. Rates are small so a fine DP grid stays cheap.
#[allow(dead_code)]
pub fn small_bundle() -> ScenarioBundle {
    let params = SystemParams {
        eta_e: 1.25,
        eta_i: 0.8,
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
    ScenarioBundle {
        scenario: Scenario::Iid(IidScenario::new(outcomes, &params).unwrap()),
        params,
        disutility,
        tag: "small-synthetic".to_string(),
    }
}

/// Prints the per-criterion verdict line and fails the test on FAIL.
#[allow(dead_code)]
pub fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "{} criterion {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}
