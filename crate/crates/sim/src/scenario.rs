//! Exogenous-process generation and the scenario configuration format.
//!
//! Three sources are supported:
//! - an i.i.d. joint outcome table (components of one outcome may be
//!   arbitrarily correlated),
//! - a finite irreducible aperiodic Markov chain with per-state emissions,
//! - the bundled hourly-profile scenario: hour-uniform price and wind draws
//!   from two 24-point profiles, selling price equal to buying price, and a
//!   two-state (high/low target) quadratic disutility.
//!
//! Scenario files are JSON; see [`ScenarioConfig`] for the schema. Loading
//! validates every invariant (probability mass, bounds, irreducibility,
//! aperiodicity) and fails hard with the violated constraint.

use crate::rng::StreamRng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use storage_dr_core::{
    DisutilitySpec, ExogenousSample, StateDisutility, StateId, SystemParams,
};
use thiserror::Error;

/// Probability mass must match 1 within this tolerance.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

// ---------------------------------------------------------------------------
// i.i.d. scenarios
// ---------------------------------------------------------------------------

/// One row of an i.i.d. outcome table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub sample: ExogenousSample,
    pub prob: f64,
}

/// A validated i.i.d. joint outcome table.
#[derive(Debug, Clone)]
pub struct IidScenario {
    outcomes: Vec<Outcome>,
    cumulative: Vec<f64>,
}

impl IidScenario {
    pub fn new(outcomes: Vec<Outcome>, params: &SystemParams) -> Result<Self, ScenarioError> {
        if outcomes.is_empty() {
            return Err(invalid("outcome table is empty"));
        }
        let mut mass = 0.0;
        for (i, o) in outcomes.iter().enumerate() {
            if !(o.prob >= 0.0) {
                return Err(invalid(format!("outcome {i} has negative probability")));
            }
            o.sample
                .check_bounds(params)
                .map_err(|e| invalid(format!("outcome {i}: {e}")))?;
            mass += o.prob;
        }
        if (mass - 1.0).abs() > PROB_TOL {
            return Err(invalid(format!(
                "probabilities sum to {mass}, expected 1"
            )));
        }
        let mut cumulative = Vec::with_capacity(outcomes.len());
        let mut acc = 0.0;
        for o in &outcomes {
            acc += o.prob;
            cumulative.push(acc);
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(Self {
            outcomes,
            cumulative,
        })
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    /// Draws one outcome according to the table probabilities.
    pub fn sample(&self, rng: &mut StreamRng) -> ExogenousSample {
        let u = rng.unit_f64();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.outcomes[idx.min(self.outcomes.len() - 1)].sample
    }
}

/// Free-function form of [`IidScenario::sample`].
pub fn sample_iid(scenario: &IidScenario, rng: &mut StreamRng) -> ExogenousSample {
    scenario.sample(rng)
}

// ---------------------------------------------------------------------------
// Markov scenarios
// ---------------------------------------------------------------------------

/// A validated finite, irreducible, aperiodic Markov chain with per-state
/// emissions.
#[derive(Debug, Clone)]
pub struct MarkovScenario {
    emissions: Vec<ExogenousSample>,
    transition: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
    pub initial: usize,
}

impl MarkovScenario {
    pub fn new(
        emissions: Vec<ExogenousSample>,
        transition: Vec<Vec<f64>>,
        initial: usize,
        params: &SystemParams,
    ) -> Result<Self, ScenarioError> {
        let n = emissions.len();
        if n == 0 {
            return Err(invalid("chain has no states"));
        }
        if transition.len() != n || transition.iter().any(|row| row.len() != n) {
            return Err(invalid("transition matrix is not square over the states"));
        }
        if initial >= n {
            return Err(invalid(format!("initial state {initial} out of range")));
        }
        for (i, e) in emissions.iter().enumerate() {
            e.check_bounds(params)
                .map_err(|e| invalid(format!("emission {i}: {e}")))?;
        }
        for (i, row) in transition.iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(invalid(format!("row {i} has a negative entry")));
            }
            let mass: f64 = row.iter().sum();
            if (mass - 1.0).abs() > PROB_TOL {
                return Err(invalid(format!("row {i} sums to {mass}, expected 1")));
            }
        }
        if !strongly_connected(&transition) {
            return Err(invalid("chain is not irreducible"));
        }
        if chain_period(&transition) != 1 {
            return Err(invalid("chain is not aperiodic"));
        }
        let cumulative = transition
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                let mut cum: Vec<f64> = row
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                if let Some(last) = cum.last_mut() {
                    *last = 1.0;
                }
                cum
            })
            .collect();
        Ok(Self {
            emissions,
            transition,
            cumulative,
            initial,
        })
    }

    pub fn len(&self) -> usize {
        self.emissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    pub fn emission(&self, state: usize) -> &ExogenousSample {
        &self.emissions[state]
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    /// Draws the successor of `current` and attaches its emission.
    pub fn step(&self, current: usize, rng: &mut StreamRng) -> (usize, ExogenousSample) {
        let u = rng.unit_f64();
        let row = &self.cumulative[current];
        let next = row.partition_point(|&c| c <= u).min(row.len() - 1);
        (next, self.emissions[next])
    }
}

/// Free-function form of [`MarkovScenario::step`].
pub fn step_markov(
    scenario: &MarkovScenario,
    current: usize,
    rng: &mut StreamRng,
) -> (usize, ExogenousSample) {
    scenario.step(current, rng)
}

fn reachable(transition: &[Vec<f64>], transpose: bool) -> Vec<bool> {
    let n = transition.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            let p = if transpose {
                transition[v][u]
            } else {
                transition[u][v]
            };
            if p > 0.0 && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

fn strongly_connected(transition: &[Vec<f64>]) -> bool {
    reachable(transition, false).iter().all(|&b| b)
        && reachable(transition, true).iter().all(|&b| b)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of an irreducible chain: gcd of `level[u] + 1 − level[v]` over all
/// edges, with BFS levels from state 0.
fn chain_period(transition: &[Vec<f64>]) -> u64 {
    let n = transition.len();
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    level[0] = 0;
    queue.push_back(0usize);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if transition[u][v] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g: u64 = 0;
    for u in 0..n {
        for v in 0..n {
            if transition[u][v] > 0.0 {
                let d = level[u] as i64 + 1 - level[v] as i64;
                g = gcd(g, d.unsigned_abs());
            }
        }
    }
    g
}

// ---------------------------------------------------------------------------
// Hourly profiles and the bundled scenario
// ---------------------------------------------------------------------------

pub const RESIDENTIAL_PRICE_PROFILE: &str = include_str!("../data/residential_price_profile.json");
pub const RESIDENTIAL_WIND_PROFILE: &str = include_str!("../data/residential_wind_profile.json");

/// Scaling targets of the bundled scenario: daily mean price 12 ¢/kWh, wind
/// mean 8 kW under a 9 kW turbine capacity.
pub const PROFILE_MEAN_PRICE: f64 = 12.0;
pub const PROFILE_MEAN_WIND: f64 = 8.0;

#[derive(Debug, Deserialize)]
struct ProfileFile {
    #[allow(dead_code)]
    note: Option<String>,
    hourly: Vec<f64>,
}

/// 24 relative hourly weights for price and wind plus their scaling targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    pub price_weights: Vec<f64>,
    pub wind_weights: Vec<f64>,
    pub mean_price: f64,
    pub mean_wind: f64,
    pub wind_capacity: f64,
}

impl ProfileTable {
    pub fn new(price_weights: Vec<f64>, wind_weights: Vec<f64>) -> Result<Self, ScenarioError> {
        for (name, w) in [("price", &price_weights), ("wind", &wind_weights)] {
            validate_weights(name, w)?;
        }
        Ok(Self {
            price_weights,
            wind_weights,
            mean_price: PROFILE_MEAN_PRICE,
            mean_wind: PROFILE_MEAN_WIND,
            wind_capacity: 9.0,
        })
    }

    /// Hourly prices rescaled so their mean is exactly `mean_price`.
    pub fn scaled_price(&self) -> Vec<f64> {
        scale_to_mean(&self.price_weights, self.mean_price)
    }

    /// Hourly wind rescaled so its mean is exactly `mean_wind`.
    pub fn scaled_wind(&self) -> Vec<f64> {
        scale_to_mean(&self.wind_weights, self.mean_wind)
    }
}

fn validate_weights(name: &str, w: &[f64]) -> Result<(), ScenarioError> {
    if w.len() != 24 {
        return Err(invalid(format!(
            "{name} profile must have 24 points, got {}",
            w.len()
        )));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(invalid(format!("{name} profile has a negative entry")));
    }
    if w.iter().sum::<f64>() <= 0.0 {
        return Err(invalid(format!("{name} profile sums to zero")));
    }
    Ok(())
}

fn scale_to_mean(weights: &[f64], mean: f64) -> Vec<f64> {
    let sum: f64 = weights.iter().sum();
    let scale = mean * weights.len() as f64 / sum;
    weights.iter().map(|w| w * scale).collect()
}

fn parse_profile(text: &str, origin: &str) -> Result<Vec<f64>, ScenarioError> {
    let file: ProfileFile = serde_json::from_str(text).map_err(|source| ScenarioError::Parse {
        path: origin.to_string(),
        source,
    })?;
    Ok(file.hourly)
}

fn read_profile(path: &Path) -> Result<Vec<f64>, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_profile(&text, &path.display().to_string())
}

/// Overrides for [`build_residential_scenario`]; `None` uses the bundled files.
#[derive(Debug, Default, Clone)]
pub struct ResidentialOverrides {
    pub price_profile: Option<std::path::PathBuf>,
    pub wind_profile: Option<std::path::PathBuf>,
}

/// System parameters of the bundled scenario.
pub fn residential_params() -> SystemParams {
    SystemParams {
        eta_e: 1.25,
        eta_i: 0.8,
        c_grid: 20.0,
        c_char: 12.0,
        c_dis: 12.0,
        l_max: 12.0,
        r_max: 9.0,
        p_max: 14.4,
        q_max: 14.4,
    }
}

/// Two equiprobable comfort states: high target 12 kW, low target 8 kW, unit
/// curvature.
pub fn residential_disutility() -> DisutilitySpec {
    DisutilitySpec {
        states: vec![
            StateDisutility {
                name: "H".to_string(),
                beta: 1.0,
                target: 12.0,
            },
            StateDisutility {
                name: "L".to_string(),
                beta: 1.0,
                target: 8.0,
            },
        ],
    }
}

/// An exogenous process plus everything a simulation needs to interpret it.
#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub scenario: Scenario,
    pub params: SystemParams,
    pub disutility: DisutilitySpec,
    /// Identifies the source; runs can only be compared within one tag.
    pub tag: String,
}

#[derive(Debug, Clone)]
pub enum Scenario {
    Iid(IidScenario),
    Markov(MarkovScenario),
}

/// Builds the bundled hourly-profile scenario: hour index uniform over 24 with
/// independent price and wind draws, comfort state uniform over {H, L}, and
/// selling price equal to buying price.
pub fn build_residential_scenario(
    overrides: &ResidentialOverrides,
) -> Result<ScenarioBundle, ScenarioError> {
    let price_raw = match &overrides.price_profile {
        Some(path) => read_profile(path)?,
        None => parse_profile(RESIDENTIAL_PRICE_PROFILE, "bundled price profile")?,
    };
    let wind_raw = match &overrides.wind_profile {
        Some(path) => read_profile(path)?,
        None => parse_profile(RESIDENTIAL_WIND_PROFILE, "bundled wind profile")?,
    };
    let table = ProfileTable::new(price_raw, wind_raw)?;
    let params = residential_params();
    let disutility = residential_disutility();
    bundle_from_profiles(&table, params, disutility, "residential".to_string())
}

/// Joint hour-uniform outcome table from two scaled profiles.
pub fn bundle_from_profiles(
    table: &ProfileTable,
    params: SystemParams,
    disutility: DisutilitySpec,
    tag: String,
) -> Result<ScenarioBundle, ScenarioError> {
    let price = table.scaled_price();
    let wind = table.scaled_wind();
    if let Some(&p) = price.iter().max_by(|a, b| a.total_cmp(b)) {
        if p > params.p_max + 1e-9 {
            return Err(invalid(format!(
                "scaled price peak {p} exceeds p_max {}",
                params.p_max
            )));
        }
    }
    if let Some(&r) = wind.iter().max_by(|a, b| a.total_cmp(b)) {
        if r > params.r_max + 1e-9 {
            return Err(invalid(format!(
                "scaled wind peak {r} exceeds r_max {}",
                params.r_max
            )));
        }
    }
    let n_states = disutility.states.len().max(1);
    let prob = 1.0 / (price.len() * wind.len() * n_states) as f64;
    let mut outcomes = Vec::with_capacity(price.len() * wind.len() * n_states);
    for &p in &price {
        for &r in &wind {
            for s in 0..n_states {
                outcomes.push(Outcome {
                    sample: ExogenousSample {
                        p,
                        q: p,
                        r,
                        s: StateId(s),
                        exo_load: None,
                    },
                    prob,
                });
            }
        }
    }
    Ok(ScenarioBundle {
        scenario: Scenario::Iid(IidScenario::new(outcomes, &params)?),
        params,
        disutility,
        tag,
    })
}

// ---------------------------------------------------------------------------
// JSON configuration
// ---------------------------------------------------------------------------

/// On-disk scenario schema.
///
/// `mode` is `"iid"`, `"markov"`, or `"residential"`. i.i.d. scenarios list
/// `outcomes` (or `profiles` for the hour-uniform joint construction with
/// `q = p`); Markov scenarios list a `chain`. `residential` takes no further
/// fields and stands for the bundled scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disutility: Option<DisutilityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<Vec<OutcomeConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<ProfilesConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub eta_e: f64,
    pub eta_i: f64,
    pub c_grid: f64,
    pub c_char: f64,
    pub c_dis: f64,
    pub l_max: f64,
    pub r_max: f64,
    pub p_max: f64,
    pub q_max: f64,
}

impl From<ParamsConfig> for SystemParams {
    fn from(c: ParamsConfig) -> Self {
        SystemParams {
            eta_e: c.eta_e,
            eta_i: c.eta_i,
            c_grid: c.c_grid,
            c_char: c.c_char,
            c_dis: c.c_dis,
            l_max: c.l_max,
            r_max: c.r_max,
            p_max: c.p_max,
            q_max: c.q_max,
        }
    }
}

impl From<SystemParams> for ParamsConfig {
    fn from(p: SystemParams) -> Self {
        ParamsConfig {
            eta_e: p.eta_e,
            eta_i: p.eta_i,
            c_grid: p.c_grid,
            c_char: p.c_char,
            c_dis: p.c_dis,
            l_max: p.l_max,
            r_max: p.r_max,
            p_max: p.p_max,
            q_max: p.q_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisutilityConfig {
    pub states: Vec<StateConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub name: String,
    pub beta: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<f64>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    #[serde(default)]
    pub initial: usize,
    pub states: Vec<EmissionConfig>,
    pub transition: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionConfig {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilesConfig {
    pub price: Vec<f64>,
    pub wind: Vec<f64>,
}

fn build_disutility(cfg: &DisutilityConfig) -> Result<DisutilitySpec, ScenarioError> {
    if cfg.states.is_empty() {
        return Err(invalid("disutility must define at least one state"));
    }
    for st in &cfg.states {
        if st.name.contains(',') || st.name.contains('\n') {
            return Err(invalid(format!(
                "state name {:?} must not contain commas or newlines",
                st.name
            )));
        }
        if !(st.beta >= 0.0) {
            return Err(invalid(format!("state {}: beta must be >= 0", st.name)));
        }
    }
    Ok(DisutilitySpec {
        states: cfg
            .states
            .iter()
            .map(|s| StateDisutility {
                name: s.name.clone(),
                beta: s.beta,
                target: s.target,
            })
            .collect(),
    })
}

fn state_index(disutility: &DisutilitySpec, name: &str) -> Result<StateId, ScenarioError> {
    disutility
        .states
        .iter()
        .position(|s| s.name == name)
        .map(StateId)
        .ok_or_else(|| invalid(format!("unknown system state {name:?}")))
}

/// Interprets a parsed [`ScenarioConfig`].
pub fn scenario_from_config(
    cfg: &ScenarioConfig,
    tag: String,
) -> Result<ScenarioBundle, ScenarioError> {
    if cfg.mode == "residential" {
        return build_residential_scenario(&ResidentialOverrides::default());
    }
    let params: SystemParams = cfg
        .params
        .clone()
        .ok_or_else(|| invalid("params are required"))?
        .into();
    let violations = params.validate();
    if !violations.is_empty() {
        return Err(invalid(format!("params: {}", violations[0])));
    }
    let disutility = build_disutility(
        cfg.disutility
            .as_ref()
            .ok_or_else(|| invalid("disutility is required"))?,
    )?;
    match cfg.mode.as_str() {
        "iid" => {
            let scenario = if let Some(rows) = &cfg.outcomes {
                let mut outcomes = Vec::with_capacity(rows.len());
                for row in rows {
                    outcomes.push(Outcome {
                        sample: ExogenousSample {
                            p: row.p,
                            q: row.q,
                            r: row.r,
                            s: state_index(&disutility, &row.s)?,
                            exo_load: row.load,
                        },
                        prob: row.prob,
                    });
                }
                IidScenario::new(outcomes, &params)?
            } else if let Some(profiles) = &cfg.profiles {
                let table = ProfileTable::new(profiles.price.clone(), profiles.wind.clone())?;
                let bundle =
                    bundle_from_profiles(&table, params, disutility.clone(), tag.clone())?;
                match bundle.scenario {
                    Scenario::Iid(s) => s,
                    Scenario::Markov(_) => unreachable!(),
                }
            } else {
                return Err(invalid("iid mode needs outcomes or profiles"));
            };
            Ok(ScenarioBundle {
                scenario: Scenario::Iid(scenario),
                params,
                disutility,
                tag,
            })
        }
        "markov" => {
            let chain = cfg
                .chain
                .as_ref()
                .ok_or_else(|| invalid("markov mode needs a chain"))?;
            let mut emissions = Vec::with_capacity(chain.states.len());
            for e in &chain.states {
                emissions.push(ExogenousSample {
                    p: e.p,
                    q: e.q,
                    r: e.r,
                    s: state_index(&disutility, &e.s)?,
                    exo_load: e.load,
                });
            }
            let scenario =
                MarkovScenario::new(emissions, chain.transition.clone(), chain.initial, &params)?;
            Ok(ScenarioBundle {
                scenario: Scenario::Markov(scenario),
                params,
                disutility,
                tag,
            })
        }
        other => Err(invalid(format!(
            "unknown mode {other:?} (expected \"iid\", \"markov\", or \"residential\")"
        ))),
    }
}

/// Loads and fully validates a scenario file.
pub fn load_scenario_config(path: &Path) -> Result<ScenarioBundle, ScenarioError> {
    let cfg = read_scenario_config(path)?;
    scenario_from_config(&cfg, path.display().to_string())
}

/// Parses a scenario file without interpreting it.
pub fn read_scenario_config(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ScenarioError::Parse {
        path: path.display().to_string(),
        source,
    })
}

/// Writes a scenario config as pretty JSON.
pub fn save_scenario_config(path: &Path, cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
    let text = serde_json::to_string_pretty(cfg).map_err(|source| ScenarioError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Resolves a CLI scenario argument: the literal `residential` or a file path.
pub fn resolve_scenario(arg: &str) -> Result<ScenarioBundle, ScenarioError> {
    if arg == "residential" {
        build_residential_scenario(&ResidentialOverrides::default())
    } else {
        load_scenario_config(Path::new(arg))
    }
}
