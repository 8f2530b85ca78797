//! Exact solver for the per-slot storage linear program.
//!
//! The program has five variables and five linear constraints:
//!
//! ```text
//! max  h_s·W_h + d_s·W_s − d_c·W_c − r_c·W_r
//! s.t. d_l + d_s = l_plus
//!      d_l + d_c ≤ c_grid
//!      d_c + r_c ≤ c_char
//!      h_s + d_s ≤ c_dis
//!      r_c ≤ l_minus
//!      d_l, d_c, d_s, h_s, r_c ≥ 0
//! ```
//!
//! The equality eliminates `d_l`, leaving a four-variable polytope with nine
//! inequality rows. [`solve_storage_lp`] enumerates every candidate vertex
//! (all `C(9,4) = 126` active sets), keeps the best feasible one, and breaks
//! objective ties by the lexicographically minimal `(d_c, h_s, d_s, r_c, d_l)`
//! vector so repeated runs return identical solutions. The polytope is bounded
//! and nonempty whenever `l_plus ≤ c_grid`, so a maximizing vertex always
//! exists.
//!
//! [`brute_force_lp`] is the independent check: a plain grid scan of the same
//! polytope whose best value is within [`oracle_slack`] of the true optimum.

use crate::model::{SystemParams, FEAS_TOL};
use core::fmt;

/// Objective-tie tolerance, relative to the objective magnitude.
const TIE_TOL: f64 = 1e-9;
/// Component tolerance for the lexicographic tie-break.
const COMP_TOL: f64 = 1e-9;
/// Pivot threshold; constraint entries are in {-1, 0, 1} so true pivots are O(1).
const SINGULAR_TOL: f64 = 1e-9;
/// Constraint-activity tolerance used by [`verify_optimality`].
const ACTIVE_TOL: f64 = 1e-7;

/// Evaluation budget for [`brute_force_lp`].
pub const BRUTE_FORCE_BUDGET: u64 = 200_000_000;

/// One per-slot LP instance: signed objective weights plus the split residual
/// load. Exactly one of `l_plus`, `l_minus` may be positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageLP {
    pub w_h: f64,
    pub w_s: f64,
    pub w_c: f64,
    pub w_r: f64,
    /// `[L]⁺` (kW).
    pub l_plus: f64,
    /// `[−L]⁺` (kW).
    pub l_minus: f64,
    pub params: SystemParams,
}

/// A solution of the storage LP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LPSolution {
    pub d_l: f64,
    pub d_c: f64,
    pub d_s: f64,
    pub h_s: f64,
    pub r_c: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    /// `l_plus > c_grid`: serving the residual load is impossible even at an
    /// empty storage. Valid parameters make this unreachable, so it is a
    /// configuration error rather than something to clip.
    StructurallyInfeasible { l_plus: f64, c_grid: f64 },
    InvalidInstance { reason: &'static str },
    /// The grid scan would exceed [`BRUTE_FORCE_BUDGET`] points.
    ResourceBudget { evaluated: u64 },
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StructurallyInfeasible { l_plus, c_grid } => write!(
                f,
                "structurally infeasible: residual load {l_plus} exceeds grid capacity {c_grid}"
            ),
            Self::InvalidInstance { reason } => write!(f, "invalid LP instance: {reason}"),
            Self::ResourceBudget { evaluated } => {
                write!(f, "brute-force budget exceeded after {evaluated} points")
            }
        }
    }
}

impl core::error::Error for LpError {}

/// Reduced-space constraint rows `a·y ≤ b` over `y = (d_s, h_s, d_c, r_c)`.
fn rows(lp: &StorageLP) -> ([[f64; 4]; 9], [f64; 9]) {
    let p = &lp.params;
    let a = [
        [-1.0, 0.0, 0.0, 0.0], // d_s ≥ 0
        [0.0, -1.0, 0.0, 0.0], // h_s ≥ 0
        [0.0, 0.0, -1.0, 0.0], // d_c ≥ 0
        [0.0, 0.0, 0.0, -1.0], // r_c ≥ 0
        [1.0, 0.0, 0.0, 0.0],  // d_s ≤ l_plus  (d_l ≥ 0)
        [-1.0, 0.0, 1.0, 0.0], // d_l + d_c ≤ c_grid
        [0.0, 0.0, 1.0, 1.0],  // d_c + r_c ≤ c_char
        [1.0, 1.0, 0.0, 0.0],  // h_s + d_s ≤ c_dis
        [0.0, 0.0, 0.0, 1.0],  // r_c ≤ l_minus
    ];
    let b = [
        0.0,
        0.0,
        0.0,
        0.0,
        lp.l_plus,
        p.c_grid - lp.l_plus,
        p.c_char,
        p.c_dis,
        lp.l_minus,
    ];
    (a, b)
}

#[inline]
fn objective_of(lp: &StorageLP, y: &[f64; 4]) -> f64 {
    y[0] * lp.w_s + y[1] * lp.w_h - y[2] * lp.w_c - y[3] * lp.w_r
}

#[inline]
fn dot4(a: &[f64; 4], y: &[f64; 4]) -> f64 {
    a[0] * y[0] + a[1] * y[1] + a[2] * y[2] + a[3] * y[3]
}

fn validate(lp: &StorageLP) -> Result<(), LpError> {
    let fields = [
        lp.w_h, lp.w_s, lp.w_c, lp.w_r, lp.l_plus, lp.l_minus,
    ];
    if fields.iter().any(|v| !v.is_finite()) {
        return Err(LpError::InvalidInstance {
            reason: "non-finite field",
        });
    }
    if lp.l_plus < 0.0 || lp.l_minus < 0.0 {
        return Err(LpError::InvalidInstance {
            reason: "negative residual-load split",
        });
    }
    if lp.l_plus.min(lp.l_minus) > COMP_TOL {
        return Err(LpError::InvalidInstance {
            reason: "l_plus and l_minus are both positive",
        });
    }
    if lp.l_plus > lp.params.l_max + FEAS_TOL {
        return Err(LpError::InvalidInstance {
            reason: "l_plus exceeds l_max",
        });
    }
    if lp.l_minus > lp.params.r_max + FEAS_TOL {
        return Err(LpError::InvalidInstance {
            reason: "l_minus exceeds r_max",
        });
    }
    if lp.l_plus > lp.params.c_grid + FEAS_TOL {
        return Err(LpError::StructurallyInfeasible {
            l_plus: lp.l_plus,
            c_grid: lp.params.c_grid,
        });
    }
    Ok(())
}

/// Solves `A y = b` for a 4×4 system by Gaussian elimination with partial
/// pivoting. Returns `None` on a (near-)singular matrix.
#[allow(clippy::needless_range_loop)]
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let mut pivot = col;
        for row in col + 1..4 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < SINGULAR_TOL {
            return None;
        }
        if pivot != col {
            a.swap(pivot, col);
            b.swap(pivot, col);
        }
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut y = [0.0; 4];
    for col in (0..4).rev() {
        let mut acc = b[col];
        for k in col + 1..4 {
            acc -= a[col][k] * y[k];
        }
        y[col] = acc / a[col][col];
    }
    Some(y)
}

/// Lexicographic key `(d_c, h_s, d_s, r_c, d_l)` used to break objective ties.
#[inline]
fn lex_key(lp: &StorageLP, y: &[f64; 4]) -> [f64; 5] {
    [y[2], y[1], y[0], y[3], lp.l_plus - y[0]]
}

fn lex_less(a: &[f64; 5], b: &[f64; 5]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < &(y - COMP_TOL) {
            return true;
        }
        if x > &(y + COMP_TOL) {
            return false;
        }
    }
    false
}

struct Best {
    y: [f64; 4],
    objective: f64,
}

fn consider(lp: &StorageLP, best: &mut Option<Best>, y: [f64; 4]) {
    let obj = objective_of(lp, &y);
    match best {
        None => *best = Some(Best { y, objective: obj }),
        Some(incumbent) => {
            let tol = TIE_TOL * (1.0 + incumbent.objective.abs().max(obj.abs()));
            if obj > incumbent.objective + tol
                || (obj >= incumbent.objective - tol
                    && lex_less(&lex_key(lp, &y), &lex_key(lp, &incumbent.y)))
            {
                *best = Some(Best { y, objective: obj });
            }
        }
    }
}

fn solution_from(lp: &StorageLP, mut y: [f64; 4]) -> LPSolution {
    for v in &mut y {
        if v.abs() < 1e-12 {
            *v = 0.0;
        }
    }
    let d_l = (lp.l_plus - y[0]).max(0.0);
    LPSolution {
        d_l,
        d_c: y[2],
        d_s: y[0],
        h_s: y[1],
        r_c: y[3],
        objective: objective_of(lp, &y),
    }
}

/// Returns a global maximizer of the storage LP. Among multiple optima the
/// lexicographically minimal `(d_c, h_s, d_s, r_c, d_l)` vertex is returned.
pub fn solve_storage_lp(lp: &StorageLP) -> Result<LPSolution, LpError> {
    validate(lp)?;
    let (a, b) = rows(lp);
    let mut best: Option<Best> = None;
    for i in 0..6 {
        for j in i + 1..7 {
            for k in j + 1..8 {
                for l in k + 1..9 {
                    let m = [a[i], a[j], a[k], a[l]];
                    let rhs = [b[i], b[j], b[k], b[l]];
                    let Some(y) = solve4(m, rhs) else { continue };
                    if (0..9).all(|r| dot4(&a[r], &y) <= b[r] + FEAS_TOL) {
                        consider(lp, &mut best, y);
                    }
                }
            }
        }
    }
    let best = best.ok_or(LpError::InvalidInstance {
        reason: "no feasible vertex found",
    })?;
    Ok(solution_from(lp, best.y))
}

/// Grid values `lo, lo+step, ...` plus the exact upper endpoint.
pub(crate) fn grid_values(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    // Truncating cast == floor for the nonnegative operand.
    let n = if hi >= lo {
        ((hi - lo) / step + 1e-9) as u64
    } else {
        0
    };
    let hi_extra = hi >= lo && lo + n as f64 * step < hi - 1e-12;
    (0..=n)
        .map(move |i| lo + i as f64 * step)
        .chain(hi_extra.then_some(hi))
        .filter(move |v| hi >= lo || *v <= hi)
}

/// Objective error bound of [`brute_force_lp`]: `5·step·max|w|`.
pub fn oracle_slack(lp: &StorageLP, step: f64) -> f64 {
    let w = lp
        .w_h
        .abs()
        .max(lp.w_s.abs())
        .max(lp.w_c.abs())
        .max(lp.w_r.abs());
    5.0 * step * w
}

/// Exhaustive grid scan of the feasible polytope at resolution `step`,
/// with `d_l = l_plus − d_s`. Independent of the vertex solver; used as the
/// verification oracle. Objective within [`oracle_slack`] of the optimum.
pub fn brute_force_lp(lp: &StorageLP, step: f64) -> Result<LPSolution, LpError> {
    if !(step > 0.0) {
        return Err(LpError::InvalidInstance {
            reason: "step must be positive",
        });
    }
    validate(lp)?;
    let p = &lp.params;
    let mut best: Option<Best> = None;
    let mut evaluated: u64 = 0;

    let ds_lo = (lp.l_plus - p.c_grid).max(0.0);
    let ds_hi = lp.l_plus.min(p.c_dis);

    // Upper-bound the grid size before scanning anything.
    let count = |lo: f64, hi: f64| -> u64 {
        if hi < lo {
            0
        } else {
            ((hi - lo) / step + 1e-9) as u64 + 2
        }
    };
    let bound = count(ds_lo, ds_hi)
        .saturating_mul(count(0.0, p.c_dis - ds_lo))
        .saturating_mul(count(0.0, lp.l_minus.min(p.c_char)))
        .saturating_mul(count(0.0, p.c_grid.min(p.c_char)));
    if bound > BRUTE_FORCE_BUDGET {
        return Err(LpError::ResourceBudget { evaluated: bound });
    }
    for d_s in grid_values(ds_lo, ds_hi, step) {
        let d_l = lp.l_plus - d_s;
        for h_s in grid_values(0.0, p.c_dis - d_s, step) {
            for r_c in grid_values(0.0, lp.l_minus.min(p.c_char), step) {
                let dc_hi = (p.c_grid - d_l).min(p.c_char - r_c);
                for d_c in grid_values(0.0, dc_hi, step) {
                    evaluated += 1;
                    if evaluated > BRUTE_FORCE_BUDGET {
                        return Err(LpError::ResourceBudget { evaluated });
                    }
                    consider(lp, &mut best, [d_s, h_s, d_c, r_c]);
                }
            }
        }
    }
    let best = best.ok_or(LpError::InvalidInstance {
        reason: "empty grid",
    })?;
    Ok(solution_from(lp, best.y))
}

/// Largest constraint violation of `sol` against `lp` (0 for an exactly
/// feasible point). Includes the load-balance equality residual.
pub fn feasibility_residual(sol: &LPSolution, lp: &StorageLP) -> f64 {
    let y = [sol.d_s, sol.h_s, sol.d_c, sol.r_c];
    let (a, b) = rows(lp);
    let mut worst: f64 = 0.0;
    for r in 0..9 {
        worst = worst.max(dot4(&a[r], &y) - b[r]);
    }
    worst = worst.max((sol.d_l + sol.d_s - lp.l_plus).abs());
    worst = worst.max(-sol.d_l);
    worst
}

/// Row-echelon rank of an `m×4` matrix.
#[allow(clippy::needless_range_loop)]
fn rank(mut m: [[f64; 4]; 9], rows_used: usize) -> usize {
    let mut rank = 0;
    for col in 0..4 {
        let mut pivot = None;
        for row in rank..rows_used {
            if m[row][col].abs() > SINGULAR_TOL {
                pivot = Some(row);
                break;
            }
        }
        let Some(pivot) = pivot else { continue };
        m.swap(rank, pivot);
        for row in rank + 1..rows_used {
            let f = m[row][col] / m[rank][col];
            for k in col..4 {
                m[row][k] -= f * m[rank][k];
            }
        }
        rank += 1;
        if rank == rows_used {
            break;
        }
    }
    rank
}

/// Null direction of three constraint rows in R⁴, or `None` when their rank
/// is below 3 (such subsets do not define an edge).
#[allow(clippy::needless_range_loop)]
fn edge_direction(r0: &[f64; 4], r1: &[f64; 4], r2: &[f64; 4]) -> Option<[f64; 4]> {
    let mut m = [*r0, *r1, *r2];
    let mut pivot_cols = [usize::MAX; 3];
    let mut rank = 0;
    for col in 0..4 {
        let mut pivot = None;
        for row in rank..3 {
            if m[row][col].abs() > SINGULAR_TOL {
                pivot = Some(row);
                break;
            }
        }
        let Some(pivot) = pivot else { continue };
        m.swap(rank, pivot);
        let inv = 1.0 / m[rank][col];
        for k in 0..4 {
            m[rank][k] *= inv;
        }
        for row in 0..3 {
            if row != rank {
                let f = m[row][col];
                for k in 0..4 {
                    m[row][k] -= f * m[rank][k];
                }
            }
        }
        pivot_cols[rank] = col;
        rank += 1;
        if rank == 3 {
            break;
        }
    }
    if rank < 3 {
        return None;
    }
    let free = (0..4).find(|c| !pivot_cols.contains(c))?;
    let mut d = [0.0; 4];
    d[free] = 1.0;
    for row in 0..3 {
        d[pivot_cols[row]] = -m[row][free];
    }
    // Normalize to unit max-magnitude for scale-free tolerances.
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in &mut d {
        *v /= scale;
    }
    Some(d)
}

/// True iff `sol` is a feasible vertex (≥ 5 active constraints counting the
/// load-balance equality and nonnegativity) and no edge direction of its
/// active set improves the objective.
pub fn verify_optimality(sol: &LPSolution, lp: &StorageLP) -> bool {
    if feasibility_residual(sol, lp) > FEAS_TOL {
        return false;
    }
    let y = [sol.d_s, sol.h_s, sol.d_c, sol.r_c];
    let (a, b) = rows(lp);
    let mut active = [0usize; 9];
    let mut n_active = 0;
    for r in 0..9 {
        if (dot4(&a[r], &y) - b[r]).abs() <= ACTIVE_TOL * (1.0 + b[r].abs()) {
            active[n_active] = r;
            n_active += 1;
        }
    }
    // Vertex test: the active rows must span R⁴.
    let mut m = [[0.0; 4]; 9];
    for (slot, &r) in active[..n_active].iter().enumerate() {
        m[slot] = a[r];
    }
    if rank(m, n_active) < 4 {
        return false;
    }
    let c = [lp.w_s, lp.w_h, -lp.w_c, -lp.w_r];
    let c_scale = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n_active {
        for j in i + 1..n_active {
            for k in j + 1..n_active {
                let Some(d) = edge_direction(&a[active[i]], &a[active[j]], &a[active[k]])
                else {
                    continue;
                };
                for dir in [d, d.map(|v| -v)] {
                    let feasible = active[..n_active]
                        .iter()
                        .all(|&r| dot4(&a[r], &dir) <= 1e-9);
                    if feasible && dot4(&c, &dir) > ACTIVE_TOL * c_scale {
                        return false;
                    }
                }
            }
        }
    }
    true
}
