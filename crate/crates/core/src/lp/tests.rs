use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::model::{Row, VarBounds};
use crate::oracle::{random_lp, vertex_enumeration};

fn knapsack_relaxation(u: f64) -> LinearProgram {
    LinearProgram::new(
        vec![-4.8, -6.0],
        vec![
            Row::le(vec![(0, 4.0), (1, 3.0)], 70.0),
            Row::le(vec![(0, 100.0 * u), (1, 85.0)], 800.0 * u + 680.0),
        ],
        vec![VarBounds::new(0.0, 17.0); 2],
    )
}

/// Primal feasibility, dual sign conditions and the objective match.
fn assert_certificate(lp: &LinearProgram, sol: &LpSolution, tol: f64) {
    assert!(sol.is_optimal());
    assert!(lp.max_violation(&sol.x) <= tol, "primal violation {}", lp.max_violation(&sol.x));
    for (r, row) in lp.rows.iter().enumerate() {
        if row.sense == crate::model::Sense::Le {
            assert!(sol.row_duals[r] >= -tol);
            let slack = row.rhs - row.activity(&sol.x);
            assert!((sol.row_duals[r] * slack).abs() <= tol * (1.0 + row.rhs.abs()));
        }
    }
    for (j, b) in lp.bounds.iter().enumerate() {
        let d = sol.reduced_costs[j];
        let at_lo = (sol.x[j] - b.lo).abs() <= tol;
        let at_hi = (sol.x[j] - b.hi).abs() <= tol;
        if d > tol {
            assert!(at_lo, "positive reduced cost away from lower bound at {j}");
        }
        if d < -tol {
            assert!(at_hi, "negative reduced cost away from upper bound at {j}");
        }
    }
    let gap = (sol.objective - sol.dual_objective(lp)).abs();
    assert!(gap <= 1e-6 * (1.0 + sol.objective.abs()), "duality gap {gap}");
}

#[test]
fn single_lower_bound() {
    // min x s.t. -x <= -3
    let lp = LinearProgram::new(vec![1.0], vec![Row::le(vec![(0, -1.0)], -3.0)], vec![VarBounds::FREE]);
    let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(sol.objective, 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(sol.row_duals[0], 1.0, epsilon = 1e-12);
}

#[test]
fn empty_region_is_infeasible() {
    let lp = LinearProgram::new(
        vec![0.0],
        vec![Row::le(vec![(0, 1.0)], 0.0), Row::le(vec![(0, -1.0)], -1.0)],
        vec![VarBounds::FREE],
    );
    assert_eq!(solve_lp(&lp, DEFAULT_TOL).unwrap().status, LpStatus::Infeasible);
}

#[test]
fn crossed_bounds_are_infeasible() {
    let lp = LinearProgram::new(vec![1.0], vec![], vec![VarBounds::new(2.0, 1.0)]);
    assert_eq!(solve_lp(&lp, DEFAULT_TOL).unwrap().status, LpStatus::Infeasible);
}

#[test]
fn unbounded_ray() {
    let lp = LinearProgram::new(
        vec![-1.0, 0.0],
        vec![Row::le(vec![(0, 1.0), (1, -1.0)], 1.0)],
        vec![VarBounds::NONNEG; 2],
    );
    assert_eq!(solve_lp(&lp, DEFAULT_TOL).unwrap().status, LpStatus::Unbounded);
}

#[test]
fn equality_rows_and_offset() {
    // min x + 2y + 5 s.t. x + y = 4, x <= 3
    let mut lp = LinearProgram::new(
        vec![1.0, 2.0],
        vec![Row::eq(vec![(0, 1.0), (1, 1.0)], 4.0)],
        vec![VarBounds::new(0.0, 3.0), VarBounds::NONNEG],
    );
    lp.objective_offset = 5.0;
    let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
    assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(sol.objective, 10.0, epsilon = 1e-12);
    assert_certificate(&lp, &sol, 1e-9);
}

#[test]
fn no_rows_uses_bounds() {
    let lp = LinearProgram::new(vec![1.0, -1.0, 0.0], vec![], vec![VarBounds::new(-2.0, 5.0); 3]);
    let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
    assert_eq!(sol.x[..2], [-2.0, 5.0]);
    assert_abs_diff_eq!(sol.objective, -7.0);
}

#[test]
fn knapsack_relaxation_matches_vertex_oracle() {
    let lp = knapsack_relaxation(0.61);
    let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
    // Frozen from an independent enumeration of all pairwise constraint intersections.
    assert_abs_diff_eq!(sol.x[0], 15.579617834394902, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.x[1], 2.560509554140129, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.objective, -90.1452229299363, epsilon = 1e-6);
    let (obj, x) = vertex_enumeration(&lp).unwrap();
    assert_abs_diff_eq!(sol.objective, obj, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.x[0], x[0], epsilon = 1e-6);
    assert_certificate(&lp, &sol, 1e-9);
}

#[test]
fn resolve_is_bit_identical() {
    let lp = knapsack_relaxation(1.45);
    let a = solve_lp(&lp, DEFAULT_TOL).unwrap();
    let b = solve_lp(&lp, DEFAULT_TOL).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.row_duals, b.row_duals);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn iteration_cap_is_an_error() {
    let lp = knapsack_relaxation(0.61);
    let solver = DenseSimplex {
        max_iterations: Some(0),
        ..DenseSimplex::default()
    };
    match solver.solve(&lp, DEFAULT_TOL) {
        Err(crate::Error::SolverFailure { iterations, .. }) => assert_eq!(iterations, 0),
        other => panic!("expected solver failure, got {other:?}"),
    }
}

#[test]
fn degenerate_cube_corner() {
    // Many rows active at the optimum (0, 0, 0).
    let mut rows = Vec::new();
    for a in [1.0, 2.0, 3.0] {
        rows.push(Row::le(vec![(0, -a), (1, -1.0), (2, -1.0)], 0.0));
        rows.push(Row::le(vec![(0, -1.0), (1, -a), (2, -1.0)], 0.0));
        rows.push(Row::le(vec![(0, -1.0), (1, -1.0), (2, -a)], 0.0));
    }
    let lp = LinearProgram::new(vec![1.0, 1.0, 1.0], rows, vec![VarBounds::FREE; 3]);
    let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
    assert_abs_diff_eq!(sol.objective, 0.0, epsilon = 1e-9);
    assert_certificate(&lp, &sol, 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn small_random_lps_match_vertex_oracle(n in 1usize..=4, m in 0usize..=8, seed in any::<u64>()) {
        let lp = random_lp(n, m, seed);
        let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
        let (obj, _) = vertex_enumeration(&lp).expect("feasible by construction");
        prop_assert!((sol.objective - obj).abs() <= 1e-6 * (1.0 + obj.abs()),
            "simplex {} oracle {}", sol.objective, obj);
        assert_certificate(&lp, &sol, 1e-7);
    }

    #[test]
    fn larger_random_lps_carry_optimality_certificates(n in 1usize..=12, m in 0usize..=20, seed in any::<u64>()) {
        let lp = random_lp(n, m, seed);
        let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_certificate(&lp, &sol, 1e-7);
    }
}
