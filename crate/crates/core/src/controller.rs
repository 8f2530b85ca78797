//! The ESM, DR-ESM, and Greedy decision rules.
//!
//! ESM serves a given load; DR-ESM additionally chooses the consumption level.
//! Both observe only the current slot (energy level, prices, renewable) and
//! need no statistics of the exogenous process. Each slot they minimize a
//! drift-plus-penalty bound built from the quadratic potential
//! `G = ½(E − θ)²`, which reduces to the storage LP of [`crate::lp`] (ESM) or
//! to a convex program with one extra scalar decision (DR-ESM).
//!
//! The offset `θ = max(p_max, q_max)/(ε·η_i) + η_e·min(l_max, c_dis)` makes
//! the weights of every storage-filling variable negative near an empty
//! storage and of every storage-draining variable negative near `θ`, which is
//! what pins the energy level into `[0, θ + η_i·c_char]` on every sample path.

use crate::lp::{grid_values, solve_storage_lp, LPSolution, LpError, StorageLP};
use crate::model::{
    disutility, positive_part, residual_load, ControlAction, DisutilitySpec, ExogenousSample,
    ModelError, StateDisutility, SystemParams, FEAS_TOL,
};
use alloc::vec::Vec;
use core::fmt;

/// Cross-check tolerance between [`dresm_decide`] and [`dresm_oracle`].
pub const TOL_DR: f64 = 1e-6;
/// Grid-point budget for [`dresm_oracle`].
pub const ORACLE_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerError {
    InvalidV(f64),
    InvalidParams,
    /// The energy level passed to a decision rule is outside `[0, capacity]`.
    EnergyOutOfRange { e: f64, capacity: f64 },
    /// ESM needs an exogenous load in the sample.
    MissingLoad,
    Model(ModelError),
    Lp(LpError),
    ResourceBudget { points: u64 },
}

impl fmt::Display for ControllerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidV(v) => write!(f, "control parameter V must be positive, got {v}"),
            Self::InvalidParams => write!(f, "system parameters fail validation"),
            Self::EnergyOutOfRange { e, capacity } => {
                write!(f, "energy level {e} outside [0, {capacity}]")
            }
            Self::MissingLoad => write!(f, "load-serving mode requires an exogenous load"),
            Self::Model(e) => write!(f, "{e}"),
            Self::Lp(e) => write!(f, "{e}"),
            Self::ResourceBudget { points } => {
                write!(f, "oracle budget exceeded ({points} grid points)")
            }
        }
    }
}

impl core::error::Error for ControllerError {}

impl From<ModelError> for ControllerError {
    fn from(e: ModelError) -> Self {
        Self::Model(e)
    }
}

impl From<LpError> for ControllerError {
    fn from(e: LpError) -> Self {
        Self::Lp(e)
    }
}

/// `θ = max(p_max, q_max)/(ε·η_i) + η_e·min(l_max, c_dis)`.
pub fn compute_theta(params: &SystemParams, epsilon: f64) -> f64 {
    params.p_max.max(params.q_max) / (epsilon * params.eta_i)
        + params.eta_e * params.l_max.min(params.c_dis)
}

/// Controller tuning derived from `V`: `ε = 1/V`, the offset `θ`, and the
/// provisioned capacity `θ + η_i·c_char`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub v: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub capacity: f64,
}

impl ControllerConfig {
    pub fn new(v: f64, params: &SystemParams) -> Result<Self, ControllerError> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(ControllerError::InvalidV(v));
        }
        if !params.validate().is_empty() {
            return Err(ControllerError::InvalidParams);
        }
        let epsilon = 1.0 / v;
        let theta = compute_theta(params, epsilon);
        Ok(Self {
            v,
            epsilon,
            theta,
            capacity: theta + params.eta_i * params.c_char,
        })
    }

    fn check_energy(&self, e: f64) -> Result<(), ControllerError> {
        if e < -FEAS_TOL || e > self.capacity + FEAS_TOL {
            return Err(ControllerError::EnergyOutOfRange {
                e,
                capacity: self.capacity,
            });
        }
        Ok(())
    }
}

/// ESM weights: `w_h = η_e(E−θ) + q/ε`, `w_s = η_e(E−θ) + p/ε`,
/// `w_c = η_i(E−θ) + p/ε`, `w_r = η_i(E−θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsmWeights {
    pub w_h: f64,
    pub w_s: f64,
    pub w_c: f64,
    pub w_r: f64,
}

pub fn esm_weights(
    e: f64,
    x: &ExogenousSample,
    cfg: &ControllerConfig,
    params: &SystemParams,
) -> EsmWeights {
    let gap_e = params.eta_e * (e - cfg.theta);
    let gap_i = params.eta_i * (e - cfg.theta);
    EsmWeights {
        w_h: gap_e + x.q / cfg.epsilon,
        w_s: gap_e + x.p / cfg.epsilon,
        w_c: gap_i + x.p / cfg.epsilon,
        w_r: gap_i,
    }
}

/// DR-ESM weights: `w_h`, `w_c`, `w_r` as in ESM, `w_l = η_e(E−θ) + p/ε`,
/// and the load-relief weight `w_d = η_e(E−θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrEsmWeights {
    pub w_h: f64,
    pub w_l: f64,
    pub w_c: f64,
    pub w_r: f64,
    pub w_d: f64,
}

pub fn dresm_weights(
    e: f64,
    x: &ExogenousSample,
    cfg: &ControllerConfig,
    params: &SystemParams,
) -> DrEsmWeights {
    let gap_e = params.eta_e * (e - cfg.theta);
    let gap_i = params.eta_i * (e - cfg.theta);
    DrEsmWeights {
        w_h: gap_e + x.q / cfg.epsilon,
        w_l: gap_e + x.p / cfg.epsilon,
        w_c: gap_i + x.p / cfg.epsilon,
        w_r: gap_i,
        w_d: gap_e,
    }
}

fn storage_lp(w_h: f64, w_s: f64, w_c: f64, w_r: f64, load: f64, params: &SystemParams) -> StorageLP {
    StorageLP {
        w_h,
        w_s,
        w_c,
        w_r,
        l_plus: positive_part(load),
        l_minus: positive_part(-load),
        params: *params,
    }
}

fn action_from(l_tilde: f64, sol: &LPSolution) -> ControlAction {
    ControlAction {
        l_tilde,
        d_l: sol.d_l,
        d_c: sol.d_c,
        d_s: sol.d_s,
        h_s: sol.h_s,
        r_c: sol.r_c,
    }
}

/// One ESM step: maximize the weighted storage LP over the residual load of
/// the given `exo_load`.
pub fn esm_decide(
    e: f64,
    x: &ExogenousSample,
    cfg: &ControllerConfig,
    params: &SystemParams,
) -> Result<ControlAction, ControllerError> {
    cfg.check_energy(e)?;
    let load = x.exo_load.ok_or(ControllerError::MissingLoad)?;
    let w = esm_weights(e, x, cfg, params);
    let lp = storage_lp(w.w_h, w.w_s, w.w_c, w.w_r, residual_load(load, x.r), params);
    let sol = solve_storage_lp(&lp)?;
    Ok(action_from(load, &sol))
}

/// The DR-ESM per-slot objective of an arbitrary action, in minimization form:
/// `V·D(l̃, s) − w_d·[l̃−r]⁺ − h_s·w_h + d_l·w_l + d_c·w_c + r_c·w_r`.
pub fn dresm_objective(
    a: &ControlAction,
    e: f64,
    x: &ExogenousSample,
    cfg: &ControllerConfig,
    params: &SystemParams,
    spec: &DisutilitySpec,
) -> Result<f64, ControllerError> {
    let w = dresm_weights(e, x, cfg, params);
    let d = disutility(a.l_tilde, x.s, spec)?;
    Ok(cfg.v * d - w.w_d * positive_part(residual_load(a.l_tilde, x.r)) - a.h_s * w.w_h
        + a.d_l * w.w_l
        + a.d_c * w.w_c
        + a.r_c * w.w_r)
}

/// Evaluates the exact inner LP at a fixed consumption level.
fn dresm_eval(
    l_tilde: f64,
    x: &ExogenousSample,
    w: &DrEsmWeights,
    cfg: &ControllerConfig,
    params: &SystemParams,
    st: &StateDisutility,
) -> Result<(ControlAction, f64), ControllerError> {
    let lp = storage_lp(
        w.w_h,
        w.w_l,
        w.w_c,
        w.w_r,
        residual_load(l_tilde, x.r),
        params,
    );
    let sol = solve_storage_lp(&lp)?;
    let a = action_from(l_tilde, &sol);
    let gap = st.target - l_tilde;
    let obj = cfg.v * st.beta * gap * gap
        - w.w_d * positive_part(residual_load(l_tilde, x.r))
        - a.h_s * w.w_h
        + a.d_l * w.w_l
        + a.d_c * w.w_c
        + a.r_c * w.w_r;
    Ok((a, obj))
}

fn push_within(cands: &mut Vec<f64>, v: f64, lo: f64, hi: f64) {
    if v >= lo - 1e-12 && v <= hi + 1e-12 {
        cands.push(v.clamp(lo, hi));
    }
}

/// One DR-ESM step: jointly optimal consumption and storage action.
///
/// The consumption axis splits into the deficit branch (`l̃ ≥ r`) and the
/// surplus branch (`l̃ ≤ r`). On each branch the inner-LP value is piecewise
/// linear in `l̃` with kinks only where a rate limit changes its binding
/// pattern, so the minimum of quadratic-plus-piecewise-linear is attained at a
/// kink, a branch endpoint, or the parabola vertex of one linear piece. All
/// such candidates are evaluated with the exact inner LP; ties resolve to the
/// smallest consumption level.
pub fn dresm_decide(
    e: f64,
    x: &ExogenousSample,
    cfg: &ControllerConfig,
    params: &SystemParams,
    spec: &DisutilitySpec,
) -> Result<ControlAction, ControllerError> {
    cfg.check_energy(e)?;
    let w = dresm_weights(e, x, cfg, params);
    let st = spec.state(x.s)?.clone();

    let l_max = params.l_max;
    let r_cap = x.r.min(l_max);
    let mut cands: Vec<f64> = Vec::with_capacity(16);
    cands.push(0.0);
    cands.push(r_cap);
    cands.push(l_max);
    // Deficit branch: the inner value kinks at these residual-load levels.
    let deficit_kinks = [
        params.c_dis,
        params.c_grid,
        params.c_grid - params.c_char,
        params.c_grid + params.c_dis - params.c_char,
    ];
    for k in deficit_kinks {
        push_within(&mut cands, x.r + k, x.r, l_max);
    }
    // Surplus branch: kinks in the surplus level.
    let surplus_kinks = [params.c_char, params.c_char - params.c_grid];
    for k in surplus_kinks {
        push_within(&mut cands, x.r - k, 0.0, r_cap);
    }
    cands.sort_by(|a, b| a.partial_cmp(b).expect("candidates are finite"));
    cands.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let mut evals: Vec<(f64, ControlAction, f64)> = Vec::with_capacity(2 * cands.len());
    for &l in &cands {
        let (a, obj) = dresm_eval(l, x, &w, cfg, params, &st)?;
        evals.push((l, a, obj));
    }

    // Parabola vertices inside each linear piece.
    if st.beta > 0.0 {
        let quad = |l: f64| {
            let gap = st.target - l;
            cfg.v * st.beta * gap * gap
        };
        let mut vertices: Vec<f64> = Vec::new();
        for pair in evals.windows(2) {
            let (la, _, fa) = pair[0];
            let (lb, _, fb) = pair[1];
            if lb - la < 1e-9 {
                continue;
            }
            let slope = ((fb - quad(lb)) - (fa - quad(la))) / (lb - la);
            let vertex = st.target - slope / (2.0 * cfg.v * st.beta);
            if vertex > la + 1e-9 && vertex < lb - 1e-9 {
                vertices.push(vertex);
            }
        }
        for l in vertices {
            let (a, obj) = dresm_eval(l, x, &w, cfg, params, &st)?;
            evals.push((l, a, obj));
        }
    }

    evals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("candidates are finite"));
    let mut best = evals.first().cloned().ok_or(ControllerError::Lp(
        LpError::InvalidInstance {
            reason: "no consumption candidates",
        },
    ))?;
    for (l, a, obj) in evals.into_iter().skip(1) {
        let tol = 1e-9 * (1.0 + best.2.abs().max(obj.abs()));
        if obj < best.2 - tol {
            best = (l, a, obj);
        }
    }
    Ok(best.1)
}

/// Verification oracle: scans `l̃ ∈ [0, l_max]` at resolution `step` with the
/// exact inner LP per grid point. Objective within `Lipschitz·step` of the
/// optimum.
pub fn dresm_oracle(
    e: f64,
    x: &ExogenousSample,
    cfg: &ControllerConfig,
    params: &SystemParams,
    spec: &DisutilitySpec,
    step: f64,
) -> Result<ControlAction, ControllerError> {
    cfg.check_energy(e)?;
    if !(step > 0.0) {
        return Err(ControllerError::Lp(LpError::InvalidInstance {
            reason: "step must be positive",
        }));
    }
    let points = (params.l_max / step) as u64 + 2;
    if points > ORACLE_BUDGET {
        return Err(ControllerError::ResourceBudget { points });
    }
    let w = dresm_weights(e, x, cfg, params);
    let st = spec.state(x.s)?.clone();
    let mut best: Option<(ControlAction, f64)> = None;
    for l in grid_values(0.0, params.l_max, step) {
        let (a, obj) = dresm_eval(l, x, &w, cfg, params, &st)?;
        // Ascending scan keeps the smallest consumption level on ties.
        match &best {
            Some((_, incumbent)) if obj >= incumbent - 1e-9 * (1.0 + incumbent.abs()) => {}
            _ => best = Some((a, obj)),
        }
    }
    Ok(best.expect("grid is nonempty").0)
}

/// A safe Lipschitz bound on the DR-ESM objective with respect to `l̃`,
/// used to convert the oracle's grid resolution into an objective error.
pub fn dresm_lipschitz(
    e: f64,
    x: &ExogenousSample,
    cfg: &ControllerConfig,
    params: &SystemParams,
    spec: &DisutilitySpec,
) -> Result<f64, ControllerError> {
    let w = dresm_weights(e, x, cfg, params);
    let st = spec.state(x.s)?;
    Ok(
        2.0 * cfg.v * st.beta * (st.target.abs() + params.l_max)
            + w.w_d.abs()
            + w.w_h.abs()
            + w.w_l.abs()
            + w.w_c.abs()
            + w.w_r.abs(),
    )
}

/// Cross-checks [`dresm_decide`] against [`dresm_oracle`] at resolution
/// `step`: the exact solution must not be worse than the oracle's best grid
/// point, and not better than the oracle by more than its resolution error.
pub fn dresm_check_against_oracle(
    e: f64,
    x: &ExogenousSample,
    cfg: &ControllerConfig,
    params: &SystemParams,
    spec: &DisutilitySpec,
    step: f64,
) -> Result<bool, ControllerError> {
    let decided = dresm_decide(e, x, cfg, params, spec)?;
    let scanned = dresm_oracle(e, x, cfg, params, spec, step)?;
    let f_decided = dresm_objective(&decided, e, x, cfg, params, spec)?;
    let f_scanned = dresm_objective(&scanned, e, x, cfg, params, spec)?;
    let lipschitz = dresm_lipschitz(e, x, cfg, params, spec)?;
    Ok(f_decided <= f_scanned + TOL_DR && f_decided >= f_scanned - lipschitz * step - TOL_DR)
}

/// Storage-free myopic baseline: minimize the instant cost
/// `D(l̃, s) + p·[l̃ − r]⁺` over `l̃ ∈ [0, l_max]`.
pub fn greedy_decide(
    x: &ExogenousSample,
    spec: &DisutilitySpec,
    params: &SystemParams,
) -> Result<ControlAction, ControllerError> {
    let st = spec.state(x.s)?;
    let r_cap = x.r.min(params.l_max);
    let mut cands: Vec<f64> = Vec::with_capacity(5);
    cands.push(0.0);
    cands.push(st.target.clamp(0.0, r_cap));
    cands.push(r_cap);
    cands.push(params.l_max);
    if st.beta > 0.0 {
        // First-order condition on the purchasing branch.
        cands.push((st.target - x.p / (2.0 * st.beta)).clamp(r_cap, params.l_max));
    }
    cands.sort_by(|a, b| a.partial_cmp(b).expect("candidates are finite"));
    cands.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let cost = |l: f64| {
        let gap = st.target - l;
        st.beta * gap * gap + x.p * positive_part(residual_load(l, x.r))
    };
    let mut best = cands[0];
    let mut best_cost = cost(best);
    for &l in &cands[1..] {
        let c = cost(l);
        if c < best_cost - 1e-12 * (1.0 + best_cost.abs()) {
            best = l;
            best_cost = c;
        }
    }
    Ok(ControlAction {
        l_tilde: best,
        d_l: positive_part(residual_load(best, x.r)),
        ..ControlAction::zero()
    })
}
