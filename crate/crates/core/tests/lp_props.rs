//! Property tests for the storage LP kernel: the vertex solver against the
//! grid oracle, scale covariance, and residual-load complementarity.

use proptest::prelude::*;
use storage_dr_core::{
    brute_force_lp, feasibility_residual, oracle_slack, positive_part, solve_storage_lp,
    verify_optimality, StorageLP, SystemParams,
};

fn arb_params() -> impl Strategy<Value = SystemParams> {
    (
        1.0..2.0f64,
        0.3..1.0f64,
        0.5..3.0f64,
        0.2..2.0f64,
        0.2..2.0f64,
        0.2..2.0f64,
        0.0..20.0f64,
        0.0..20.0f64,
    )
        .prop_map(
            |(eta_e, eta_i, c_grid, c_char, c_dis, r_max, p_max, q_max)| {
                // Keep the capacity assumption satisfied with margin.
                let l_max = 0.95 * eta_i * c_grid / eta_e;
                SystemParams {
                    eta_e,
                    eta_i,
                    c_grid,
                    c_char,
                    c_dis,
                    l_max,
                    r_max,
                    p_max,
                    q_max,
                }
            },
        )
}

fn arb_lp() -> impl Strategy<Value = StorageLP> {
    (
        arb_params(),
        prop::array::uniform4(-20.0..20.0f64),
        -1.0..1.0f64,
    )
        .prop_map(|(params, w, t)| {
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
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_beats_grid_oracle(lp in arb_lp()) {
        let step = 0.05;
        let exact = solve_storage_lp(&lp).unwrap();
        let brute = brute_force_lp(&lp, step).unwrap();
        prop_assert!(exact.objective >= brute.objective - 1e-9,
            "exact {} below oracle {}", exact.objective, brute.objective);
        prop_assert!(exact.objective - brute.objective <= oracle_slack(&lp, step) + 1e-9,
            "oracle slack violated: exact {} vs brute {}", exact.objective, brute.objective);
        prop_assert!(feasibility_residual(&exact, &lp) <= 1e-9);
        prop_assert!(verify_optimality(&exact, &lp));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn weight_scaling_keeps_the_vertex(lp in arb_lp(), lambda in 0.1..10.0f64) {
        let base = solve_storage_lp(&lp).unwrap();
        let scaled_lp = StorageLP {
            w_h: lp.w_h * lambda,
            w_s: lp.w_s * lambda,
            w_c: lp.w_c * lambda,
            w_r: lp.w_r * lambda,
            ..lp
        };
        let scaled = solve_storage_lp(&scaled_lp).unwrap();
        for (a, b) in [
            (base.d_l, scaled.d_l),
            (base.d_c, scaled.d_c),
            (base.d_s, scaled.d_s),
            (base.h_s, scaled.h_s),
            (base.r_c, scaled.r_c),
        ] {
            prop_assert!((a - b).abs() <= 1e-6, "vertex moved: {a} vs {b}");
        }
        let expect = base.objective * lambda;
        prop_assert!((scaled.objective - expect).abs() <= 1e-7 * (1.0 + expect.abs()));
    }

    #[test]
    fn residual_complementarity(lp in arb_lp()) {
        let sol = solve_storage_lp(&lp).unwrap();
        if lp.l_plus > 1e-9 {
            prop_assert_eq!(sol.r_c, 0.0);
        }
        if lp.l_minus > 1e-9 {
            prop_assert_eq!(sol.d_s + sol.d_l, 0.0);
        }
    }

    #[test]
    fn reported_violations_are_rederivable(lp in arb_lp(), scale in 0.0..1.5f64) {
        // Random (possibly infeasible) point: every violation the feasibility
        // check reports must match the raw constraint arithmetic.
        let y = [
            scale * lp.l_plus.min(lp.params.c_dis),
            scale * lp.params.c_dis,
            scale * lp.params.c_char,
            scale * lp.l_minus,
        ];
        let sol = storage_dr_core::LPSolution {
            d_l: lp.l_plus - y[0],
            d_s: y[0],
            h_s: y[1],
            d_c: y[2],
            r_c: y[3],
            objective: 0.0,
        };
        let residual = feasibility_residual(&sol, &lp);
        let worst = [
            y[0] + y[1] - lp.params.c_dis,
            y[2] + y[3] - lp.params.c_char,
            sol.d_l + y[2] - lp.params.c_grid,
            y[3] - lp.l_minus,
            y[0] - lp.l_plus,
            -sol.d_l,
        ]
        .into_iter()
        .fold(0.0f64, f64::max);
        prop_assert!((residual - worst).abs() <= 1e-9);
    }
}
