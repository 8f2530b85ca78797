//! Physical system model: parameters, per-slot exogenous data, control actions,
//! storage dynamics, per-slot cost, and feasibility predicates.
//!
//! Conventions: every time slot is one hour, so power in kW and energy in kWh
//! are numerically interchangeable. Prices are ¢/kWh. `[x]⁺ = max(x, 0)`
//! everywhere; a negative residual load is never clipped before computing
//! `[-L]⁺`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Tolerance for the load-balance equality constraint (kW).
pub const TAU_EQ: f64 = 1e-9;
/// Slack for inequality feasibility checks (kW / kWh).
pub const FEAS_TOL: f64 = 1e-9;

/// `[x]⁺`.
#[inline]
pub fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

/// Physical constants of the installation. All rates are per-slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Discharge coefficient, ≥ 1: drawing `d` kW from storage removes `eta_e·d` kWh.
    pub eta_e: f64,
    /// Charge coefficient, in (0, 1]: charging with `d` kW stores `eta_i·d` kWh.
    pub eta_i: f64,
    /// Max grid draw per slot (kW).
    pub c_grid: f64,
    /// Max storage charge rate (kW).
    pub c_char: f64,
    /// Max storage discharge rate (kW).
    pub c_dis: f64,
    /// Max consumption level (kW).
    pub l_max: f64,
    /// Max renewable power (kW).
    pub r_max: f64,
    /// Upper bound on the buying price (¢/kWh).
    pub p_max: f64,
    /// Upper bound on the selling price (¢/kWh).
    pub q_max: f64,
}

/// A violated [`SystemParams`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamViolation {
    DischargeCoefficient { eta_e: f64 },
    ChargeCoefficient { eta_i: f64 },
    NonPositiveRate { name: &'static str, value: f64 },
    NegativePriceBound { name: &'static str, value: f64 },
    /// `eta_i·c_grid ≥ eta_e·l_max` must hold: a full-rate grid charge has to
    /// be able to cover a full load for one slot.
    Capacity { charge_side: f64, load_side: f64 },
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DischargeCoefficient { eta_e } => {
                write!(f, "eta_e must be >= 1, got {eta_e}")
            }
            Self::ChargeCoefficient { eta_i } => {
                write!(f, "eta_i must be in (0, 1], got {eta_i}")
            }
            Self::NonPositiveRate { name, value } => {
                write!(f, "{name} must be > 0, got {value}")
            }
            Self::NegativePriceBound { name, value } => {
                write!(f, "{name} must be >= 0, got {value}")
            }
            Self::Capacity {
                charge_side,
                load_side,
            } => write!(
                f,
                "capacity assumption violated: eta_i*c_grid = {charge_side} < eta_e*l_max = {load_side}"
            ),
        }
    }
}

impl SystemParams {
    /// Checks every invariant; the empty list means the parameters are valid.
    pub fn validate(&self) -> Vec<ParamViolation> {
        let mut v = Vec::new();
        if !(self.eta_e >= 1.0) {
            v.push(ParamViolation::DischargeCoefficient { eta_e: self.eta_e });
        }
        if !(self.eta_i > 0.0 && self.eta_i <= 1.0) {
            v.push(ParamViolation::ChargeCoefficient { eta_i: self.eta_i });
        }
        for (name, value) in [
            ("c_grid", self.c_grid),
            ("c_char", self.c_char),
            ("c_dis", self.c_dis),
            ("l_max", self.l_max),
            ("r_max", self.r_max),
        ] {
            if !(value > 0.0) {
                v.push(ParamViolation::NonPositiveRate { name, value });
            }
        }
        for (name, value) in [("p_max", self.p_max), ("q_max", self.q_max)] {
            if !(value >= 0.0) {
                v.push(ParamViolation::NegativePriceBound { name, value });
            }
        }
        let charge_side = self.eta_i * self.c_grid;
        let load_side = self.eta_e * self.l_max;
        if !(charge_side >= load_side) {
            v.push(ParamViolation::Capacity {
                charge_side,
                load_side,
            });
        }
        v
    }
}

/// Validates [`SystemParams`]; empty result means ok.
pub fn validate_params(params: &SystemParams) -> Vec<ParamViolation> {
    params.validate()
}

/// Index of a system state (e.g. high/low temperature) into a [`DisutilitySpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

/// One slot's realization of the exogenous process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExogenousSample {
    /// Buying price (¢/kWh).
    pub p: f64,
    /// Selling price (¢/kWh).
    pub q: f64,
    /// Available renewable power (kW).
    pub r: f64,
    /// System-state label.
    pub s: StateId,
    /// Given load (kW); present only in load-serving mode.
    pub exo_load: Option<f64>,
}

impl ExogenousSample {
    /// Checks the sample against the bounds in `params`.
    pub fn check_bounds(&self, params: &SystemParams) -> Result<(), ModelError> {
        let checks = [
            ("p", self.p, params.p_max),
            ("q", self.q, params.q_max),
            ("r", self.r, params.r_max),
        ];
        for (name, value, limit) in checks {
            if !(value >= 0.0 && value <= limit + FEAS_TOL) {
                return Err(ModelError::SampleOutOfBounds { name, value, limit });
            }
        }
        if let Some(load) = self.exo_load {
            if !(load >= 0.0 && load <= params.l_max + FEAS_TOL) {
                return Err(ModelError::SampleOutOfBounds {
                    name: "load",
                    value: load,
                    limit: params.l_max,
                });
            }
        }
        Ok(())
    }
}

/// The six per-slot decision variables. All in kW, all nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlAction {
    /// Consumption level L̃.
    pub l_tilde: f64,
    /// Grid power serving the load.
    pub d_l: f64,
    /// Grid power charging the storage.
    pub d_c: f64,
    /// Storage power serving the load.
    pub d_s: f64,
    /// Storage power sold back to the grid.
    pub h_s: f64,
    /// Surplus renewable power charging the storage.
    pub r_c: f64,
}

impl ControlAction {
    /// The all-zero action (consume nothing, touch nothing).
    pub const fn zero() -> Self {
        Self {
            l_tilde: 0.0,
            d_l: 0.0,
            d_c: 0.0,
            d_s: 0.0,
            h_s: 0.0,
            r_c: 0.0,
        }
    }

    /// Total power discharged from storage this slot.
    #[inline]
    pub fn discharge(&self) -> f64 {
        self.d_s + self.h_s
    }

    /// Total power charged into storage this slot.
    #[inline]
    pub fn charge(&self) -> f64 {
        self.d_c + self.r_c
    }
}

/// Stored energy level together with the provisioned capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    /// Stored energy (kWh).
    pub e: f64,
    /// Provisioned storage size (kWh).
    pub capacity: f64,
}

impl BatteryState {
    /// True iff `0 ≤ e ≤ capacity` up to `FEAS_TOL`.
    pub fn in_bounds(&self) -> bool {
        self.e >= -FEAS_TOL && self.e <= self.capacity + FEAS_TOL
    }
}

/// Quadratic disutility parameters for one system state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDisutility {
    pub name: String,
    /// Curvature weight (¢/kW²), ≥ 0.
    pub beta: f64,
    /// Target consumption level (kW).
    pub target: f64,
}

/// Per-state disutility table `D(l̃, s) = beta_s·(target_s − l̃)²`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DisutilitySpec {
    pub states: Vec<StateDisutility>,
}

impl DisutilitySpec {
    pub fn state(&self, s: StateId) -> Result<&StateDisutility, ModelError> {
        self.states.get(s.0).ok_or(ModelError::UnknownState {
            index: s.0,
            count: self.states.len(),
        })
    }
}

/// Whether the slot cost includes the disutility term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMode {
    /// Given load: cost is purchases minus sales only.
    LoadServing,
    /// Chosen load: disutility plus purchases minus sales.
    DemandResponse,
}

/// Errors from model operations.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    UnknownState {
        index: usize,
        count: usize,
    },
    /// Discharge would exceed the stored energy scaled by `eta_e`.
    EnergyAvailability {
        required: f64,
        stored: f64,
    },
    SampleOutOfBounds {
        name: &'static str,
        value: f64,
        limit: f64,
    },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownState { index, count } => {
                write!(f, "unknown system state index {index} (have {count})")
            }
            Self::EnergyAvailability { required, stored } => write!(
                f,
                "energy availability violated: discharge needs {required} kWh, stored {stored} kWh"
            ),
            Self::SampleOutOfBounds { name, value, limit } => {
                write!(f, "sample field {name} = {value} outside [0, {limit}]")
            }
        }
    }
}

impl core::error::Error for ModelError {}

/// Residual demand `L = l̃ − r`. Positive: load to serve; negative: surplus
/// renewable available for charging.
#[inline]
pub fn residual_load(l_tilde: f64, r: f64) -> f64 {
    l_tilde - r
}

/// `D(l̃, s) = beta_s·(target_s − l̃)²`.
pub fn disutility(l_tilde: f64, s: StateId, spec: &DisutilitySpec) -> Result<f64, ModelError> {
    let st = spec.state(s)?;
    let gap = st.target - l_tilde;
    Ok(st.beta * gap * gap)
}

/// Per-slot cost in ¢: disutility (demand-response mode only) plus purchases
/// minus sales. Can be negative when selling dominates.
pub fn slot_cost(
    a: &ControlAction,
    x: &ExogenousSample,
    spec: &DisutilitySpec,
    mode: CostMode,
) -> Result<f64, ModelError> {
    let trade = x.p * (a.d_l + a.d_c) - x.q * a.h_s;
    match mode {
        CostMode::LoadServing => Ok(trade),
        CostMode::DemandResponse => Ok(disutility(a.l_tilde, x.s, spec)? + trade),
    }
}

/// Advances the storage level by one slot:
/// `e' = e − eta_e·(d_s + h_s) + eta_i·(d_c + r_c)`.
///
/// Rejects actions that discharge more than the stored energy allows.
pub fn apply_storage_dynamics(
    e: f64,
    a: &ControlAction,
    params: &SystemParams,
) -> Result<f64, ModelError> {
    let required = params.eta_e * a.discharge();
    if required > e + FEAS_TOL {
        return Err(ModelError::EnergyAvailability {
            required,
            stored: e,
        });
    }
    Ok(e - required + params.eta_i * a.charge())
}

/// A violated per-slot feasibility constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `d_l + d_s` must equal `[L]⁺` within [`TAU_EQ`].
    LoadBalance { supplied: f64, required: f64 },
    /// `d_l + d_c ≤ c_grid`.
    GridLimit { drawn: f64, limit: f64 },
    /// `d_c + r_c ≤ c_char`.
    ChargeLimit { rate: f64, limit: f64 },
    /// `h_s + d_s ≤ c_dis`.
    DischargeLimit { rate: f64, limit: f64 },
    /// `r_c ≤ [−L]⁺`.
    RenewableCharge { rate: f64, surplus: f64 },
    /// Decision variables must be nonnegative.
    NegativeComponent { name: &'static str, value: f64 },
    /// `l̃ ≤ l_max`.
    ConsumptionLimit { l_tilde: f64, limit: f64 },
    /// `eta_e·(d_s + h_s) ≤ e`.
    EnergyAvailability { required: f64, stored: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LoadBalance { supplied, required } => {
                write!(f, "load balance: d_l + d_s = {supplied}, residual load {required}")
            }
            Self::GridLimit { drawn, limit } => {
                write!(f, "grid limit: d_l + d_c = {drawn} > c_grid = {limit}")
            }
            Self::ChargeLimit { rate, limit } => {
                write!(f, "charge limit: d_c + r_c = {rate} > c_char = {limit}")
            }
            Self::DischargeLimit { rate, limit } => {
                write!(f, "discharge limit: h_s + d_s = {rate} > c_dis = {limit}")
            }
            Self::RenewableCharge { rate, surplus } => {
                write!(f, "renewable charge: r_c = {rate} > surplus {surplus}")
            }
            Self::NegativeComponent { name, value } => {
                write!(f, "negative component: {name} = {value}")
            }
            Self::ConsumptionLimit { l_tilde, limit } => {
                write!(f, "consumption limit: l_tilde = {l_tilde} > l_max = {limit}")
            }
            Self::EnergyAvailability { required, stored } => {
                write!(f, "energy availability: eta_e*(d_s+h_s) = {required} > E = {stored}")
            }
        }
    }
}

/// Checks every per-slot constraint, including energy availability against the
/// current storage level `e`. The empty list means the action is feasible.
pub fn check_feasibility(
    a: &ControlAction,
    x: &ExogenousSample,
    e: f64,
    params: &SystemParams,
) -> Vec<Violation> {
    let mut v = Vec::new();
    for (name, value) in [
        ("l_tilde", a.l_tilde),
        ("d_l", a.d_l),
        ("d_c", a.d_c),
        ("d_s", a.d_s),
        ("h_s", a.h_s),
        ("r_c", a.r_c),
    ] {
        if value < -FEAS_TOL {
            v.push(Violation::NegativeComponent { name, value });
        }
    }
    if a.l_tilde > params.l_max + FEAS_TOL {
        v.push(Violation::ConsumptionLimit {
            l_tilde: a.l_tilde,
            limit: params.l_max,
        });
    }
    let load = residual_load(a.l_tilde, x.r);
    let required = positive_part(load);
    let supplied = a.d_l + a.d_s;
    if (supplied - required).abs() > TAU_EQ {
        v.push(Violation::LoadBalance { supplied, required });
    }
    let drawn = a.d_l + a.d_c;
    if drawn > params.c_grid + FEAS_TOL {
        v.push(Violation::GridLimit {
            drawn,
            limit: params.c_grid,
        });
    }
    let charge = a.charge();
    if charge > params.c_char + FEAS_TOL {
        v.push(Violation::ChargeLimit {
            rate: charge,
            limit: params.c_char,
        });
    }
    let discharge = a.discharge();
    if discharge > params.c_dis + FEAS_TOL {
        v.push(Violation::DischargeLimit {
            rate: discharge,
            limit: params.c_dis,
        });
    }
    let surplus = positive_part(-load);
    if a.r_c > surplus + FEAS_TOL {
        v.push(Violation::RenewableCharge {
            rate: a.r_c,
            surplus,
        });
    }
    let need = params.eta_e * discharge;
    if need > e + FEAS_TOL {
        v.push(Violation::EnergyAvailability {
            required: need,
            stored: e,
        });
    }
    v
}
