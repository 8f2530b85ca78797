//! Randomized self-test of the LP kernel: the vertex solver against the
//! brute-force grid oracle plus the vertex-optimality certificate.
//!
//! Instances are drawn at unit scale (rates of a few kW) so the mandated
//! 0.01 kW oracle grid stays tractable; the vertex enumeration itself is
//! scale-free, and the weight-scaling property test covers the rest.

use crate::rng::StreamRng;
use storage_dr_core::{
    brute_force_lp, feasibility_residual, oracle_slack, positive_part, solve_storage_lp,
    verify_optimality, StorageLP, SystemParams,
};

/// One seeded random LP instance.
pub fn random_lp_instance(rng: &mut StreamRng) -> StorageLP {
    let eta_e = 1.0 + rng.unit_f64();
    let eta_i = 0.3 + 0.7 * rng.unit_f64();
    let c_grid = 0.5 + 2.5 * rng.unit_f64();
    let params = SystemParams {
        eta_e,
        eta_i,
        c_grid,
        c_char: 0.2 + 1.3 * rng.unit_f64(),
        c_dis: 0.2 + 1.3 * rng.unit_f64(),
        l_max: 0.95 * eta_i * c_grid / eta_e,
        r_max: 0.2 + 1.3 * rng.unit_f64(),
        p_max: 20.0 * rng.unit_f64(),
        q_max: 20.0 * rng.unit_f64(),
    };
    let mut w = [0.0f64; 4];
    for v in &mut w {
        *v = 40.0 * rng.unit_f64() - 20.0;
    }
    let t = 2.0 * rng.unit_f64() - 1.0;
    let load = if t >= 0.0 {
        t * params.l_max
    } else {
        t * params.r_max
    };
    StorageLP {
        w_h: w[0],
        w_s: w[1],
        w_c: w[2],
        w_r: w[3],
        l_plus: positive_part(load),
        l_minus: positive_part(-load),
        params,
    }
}

#[derive(Debug, Clone)]
pub struct LpSelftestReport {
    pub instances: usize,
    pub step: f64,
    /// Worst `exact − oracle` gap (should be within the oracle slack).
    pub max_gap: f64,
    pub max_residual: f64,
    pub failures: Vec<String>,
}

impl LpSelftestReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs `n` seeded instances at oracle resolution `step`.
pub fn run_lp_selftest(n: usize, seed: u64, step: f64) -> LpSelftestReport {
    let mut rng = StreamRng::new(seed, 0);
    let mut report = LpSelftestReport {
        instances: n,
        step,
        max_gap: 0.0,
        max_residual: 0.0,
        failures: Vec::new(),
    };
    for i in 0..n {
        let lp = random_lp_instance(&mut rng);
        let exact = match solve_storage_lp(&lp) {
            Ok(sol) => sol,
            Err(e) => {
                report.failures.push(format!("instance {i}: solver error {e}"));
                continue;
            }
        };
        let brute = match brute_force_lp(&lp, step) {
            Ok(sol) => sol,
            Err(e) => {
                report.failures.push(format!("instance {i}: oracle error {e}"));
                continue;
            }
        };
        let slack = oracle_slack(&lp, step);
        if exact.objective < brute.objective - 1e-9 {
            report.failures.push(format!(
                "instance {i}: exact {} below oracle {}",
                exact.objective, brute.objective
            ));
        }
        let gap = exact.objective - brute.objective;
        report.max_gap = report.max_gap.max(gap);
        if gap > slack + 1e-9 {
            report.failures.push(format!(
                "instance {i}: gap {gap} exceeds oracle slack {slack}"
            ));
        }
        let residual = feasibility_residual(&exact, &lp);
        report.max_residual = report.max_residual.max(residual);
        if residual > 1e-9 {
            report
                .failures
                .push(format!("instance {i}: feasibility residual {residual}"));
        }
        if !verify_optimality(&exact, &lp) {
            report
                .failures
                .push(format!("instance {i}: optimality certificate failed"));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_selftest_passes() {
        let report = run_lp_selftest(25, 7, 0.05);
        assert!(report.passed(), "failures: {:?}", report.failures);
        assert!(report.max_residual <= 1e-9);
    }
}
