use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::lp::solve_lp;
use crate::milp::{solve_milp, MilpOptions};
use crate::model::{assemble_cuts, CutPattern, FeatureMap, LinearProgram, VarBounds};
use crate::oracle::vertex_enumeration;
use crate::problems::knapsack;

fn knapsack_problem(us: &[f64], spec: &SurrogateSpec) -> TrainingProblem {
    let pairs = us
        .iter()
        .map(|&u| {
            let milp = knapsack::instantiate(u);
            let x = solve_milp(&milp, &MilpOptions::default()).unwrap().x.unwrap();
            (milp, x)
        })
        .collect();
    TrainingProblem::from_instances(spec, pairs).unwrap()
}

fn published(spec: &SurrogateSpec) -> Theta {
    Theta::from_nested(spec, &knapsack::published_theta(), 100.0).unwrap()
}

/// Penalty objective recomputed from a dense stacked matrix, independent of
/// the trainer's row bookkeeping. Stacking order: each original row (an
/// equality followed by its negation), lower then upper bound rows per
/// variable, then cuts.
fn dense_residuals(problem: &TrainingProblem, it: &TrainerIterate) -> [f64; 3] {
    let mut total = [0.0; 3];
    for (i, inst) in problem.instances.iter().enumerate() {
        let milp = &inst.milp;
        let n = milp.n_vars();
        let mut a: Vec<Vec<f64>> = Vec::new();
        let mut b = Vec::new();
        let dense = |coeffs: &[(usize, f64)]| {
            let mut r = vec![0.0; n];
            for &(j, v) in coeffs {
                r[j] += v;
            }
            r
        };
        for row in &milp.lp.rows {
            a.push(dense(&row.coeffs));
            b.push(row.rhs);
            if row.sense == Sense::Eq {
                a.push(dense(&row.coeffs).iter().map(|v| -v).collect());
                b.push(-row.rhs);
            }
        }
        for (j, bd) in milp.lp.bounds.iter().enumerate() {
            if bd.lo.is_finite() {
                let mut r = vec![0.0; n];
                r[j] = -1.0;
                a.push(r);
                b.push(-bd.lo);
            }
            if bd.hi.is_finite() {
                let mut r = vec![0.0; n];
                r[j] = 1.0;
                a.push(r);
                b.push(bd.hi);
            }
        }
        for cut in assemble_cuts(&milp.input, &it.theta, &problem.spec).unwrap() {
            a.push(dense(&cut.coeffs));
            b.push(cut.rhs);
        }
        let x = &it.x_tilde[i];
        let d = &it.duals[i];
        for j in 0..n {
            let g: f64 = milp.lp.cost[j] + (0..a.len()).map(|r| a[r][j] * d[r]).sum::<f64>();
            total[0] += g.abs();
        }
        let mut comp = 0.0;
        for r in 0..a.len() {
            let s: f64 = (0..n).map(|j| a[r][j] * x[j]).sum::<f64>() - b[r];
            total[1] += s.max(0.0);
            comp += d[r] * s;
        }
        total[2] += comp.abs();
    }
    total
}

fn random_iterate(problem: &TrainingProblem, seed: u64) -> TrainerIterate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Theta::zeros(&problem.spec, 100.0);
    theta.values.iter_mut().for_each(|t| *t = rng.gen_range(-20.0..20.0));
    let x_tilde = problem
        .instances
        .iter()
        .map(|inst| (0..inst.n_vars()).map(|_| rng.gen_range(-2.0..20.0)).collect())
        .collect();
    let duals = problem
        .instances
        .iter()
        .map(|inst| {
            (0..inst.n_stacked(&problem.spec))
                .map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..3.0) })
                .collect()
        })
        .collect();
    let mut it = TrainerIterate {
        theta,
        x_tilde,
        duals,
        loss: 0.0,
        residuals: [0.0; 3],
    };
    it.refresh(problem);
    it
}

#[test]
fn residuals_vanish_at_surrogate_optima() {
    let spec = knapsack::default_spec();
    let problem = knapsack_problem(&[0.2, 0.61, 1.45], &spec);
    let it = TrainerIterate::at_surrogate_optimum(published(&spec), &problem, Execution::Sequential).unwrap();
    for r in it.residuals {
        assert!(r <= 1e-6, "{:?}", it.residuals);
    }
}

#[test]
fn zero_duals_leave_the_cost_as_stationarity_residual() {
    let spec = knapsack::default_spec();
    let problem = knapsack_problem(&[0.3, 0.9], &spec);
    let it = TrainerIterate {
        theta: Theta::zeros(&spec, 100.0),
        x_tilde: vec![vec![1.0, 1.0]; 2],
        duals: vec![vec![0.0; problem.instances[0].n_stacked(&spec)]; 2],
        loss: 0.0,
        residuals: [0.0; 3],
    };
    let r = kkt_residuals(&it, &problem);
    assert_abs_diff_eq!(r[0], 10.8 * 2.0, epsilon = 1e-12);
    assert_eq!(r[1], 0.0);
    assert_eq!(r[2], 0.0);
}

#[test]
fn residuals_match_dense_recomputation() {
    let spec = knapsack::default_spec();
    let problem = knapsack_problem(&[0.15, 0.7, 1.3, 1.5], &spec);
    for seed in 0..10 {
        let it = random_iterate(&problem, seed);
        let fast = kkt_residuals(&it, &problem);
        let slow = dense_residuals(&problem, &it);
        for k in 0..3 {
            assert!((fast[k] - slow[k]).abs() <= 1e-9 * (1.0 + slow[k].abs()), "{fast:?} vs {slow:?}");
        }
    }
}

#[test]
fn theta_step_without_penalty_is_the_identity() {
    let spec = knapsack::default_spec();
    let problem = knapsack_problem(&[0.4, 1.1], &spec);
    let it = random_iterate(&problem, 3);
    let out = bcd_step_theta(&it, &problem, &[0.0; 3], 1e-3).unwrap();
    assert_eq!(out.values, it.theta.values);
}

#[test]
fn theta_step_keeps_a_zero_penalty_point() {
    let spec = knapsack::default_spec();
    let problem = knapsack_problem(&[0.2, 0.61, 1.45], &spec);
    let theta = published(&spec);
    let it = TrainerIterate::at_surrogate_optimum(theta.clone(), &problem, Execution::Sequential).unwrap();
    let out = bcd_step_theta(&it, &problem, &[1.0; 3], 1e-3).unwrap();
    for (a, b) in out.values.iter().zip(&theta.values) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-7);
    }
}

/// Two variables, one degree-0 cut `a * x0 <= 2` with a single scalar `a`.
fn scalar_cut_problem() -> (TrainingProblem, TrainerIterate) {
    let spec = SurrogateSpec {
        input_dim: 1,
        cuts: vec![CutPattern {
            vars: vec![0],
            inputs: vec![0],
        }],
        feature_map: FeatureMap::univariate(1, 0),
        rhs_mode: RhsMode::Fixed(2.0),
    };
    let milp = ConcreteMILP {
        lp: LinearProgram::new(
            vec![-1.0, -2.0],
            vec![Row::le(vec![(0, 1.0), (1, 1.0)], 4.0)],
            vec![VarBounds::new(0.0, 3.0); 2],
        ),
        integrality: vec![false, false],
        input: vec![0.5],
    };
    let problem = TrainingProblem::from_instances(&spec, vec![(milp, vec![1.0, 3.0])]).unwrap();
    let mut theta = Theta::zeros(&spec, 2.0);
    theta.values[0] = 0.3;
    // Stacked rows: x0 + x1 <= 4, -x0 <= 0, x0 <= 3, -x1 <= 0, x1 <= 3, cut.
    let mut it = TrainerIterate {
        theta,
        x_tilde: vec![vec![2.0, 1.0]],
        duals: vec![vec![0.4, 0.0, 0.1, 0.2, 0.0, 0.7]],
        loss: 0.0,
        residuals: [0.0; 3],
    };
    it.refresh(&problem);
    (problem, it)
}

#[test]
fn theta_step_matches_grid_search() {
    let (problem, mut it) = scalar_cut_problem();
    let q = [1.0, 2.0, 0.5];
    let w = 1e-3;
    let prev = it.theta.values[0];
    let f = |a: f64, it: &mut TrainerIterate| {
        it.theta.values[0] = a;
        penalty_objective(it, &problem, &q) + w * (a - prev).abs()
    };
    let mut grid_best = f64::INFINITY;
    for k in 0..=4000 {
        grid_best = grid_best.min(f(-2.0 + k as f64 * 1e-3, &mut it));
    }
    it.theta.values[0] = prev;
    let step = bcd_step_theta(&it, &problem, &q, w).unwrap();
    let f_step = f(step.values[0], &mut it);
    assert!(f_step <= grid_best + 1e-9, "step {f_step} grid {grid_best}");
    // Slopes are bounded by about 3, so the grid is within 3e-3 of the optimum.
    assert!(grid_best - f_step <= 3e-3);
}

#[test]
fn x_step_returns_a_feasible_label_unchanged() {
    let spec = knapsack::default_spec();
    let problem = knapsack_problem(&[0.3, 0.8, 1.2], &spec);
    let mut it = TrainerIterate::at_surrogate_optimum(published(&spec), &problem, Execution::Sequential).unwrap();
    it.duals.iter_mut().for_each(|d| d.iter_mut().for_each(|v| *v = 0.0));
    let xs = bcd_step_x(&it, &problem, &[1.0, 1.0, 0.0], 1e-3, Execution::Sequential).unwrap();
    for (x, inst) in xs.iter().zip(&problem.instances) {
        let rows = inst.stacked(&it.theta, &spec);
        if rows.iter().all(|r| r.violation(&inst.x_star) <= 1e-12) {
            for (a, b) in x.iter().zip(&inst.x_star) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }
}

#[test]
fn x_step_with_large_penalty_projects_in_l1() {
    // Region x0 + 2 x1 <= 4, 3 x0 + x1 <= 6, box [0, 5]; label (4, 4) is outside.
    let spec = SurrogateSpec {
        input_dim: 1,
        cuts: vec![],
        feature_map: FeatureMap::univariate(1, 0),
        rhs_mode: RhsMode::Fixed(100.0),
    };
    let rows = vec![
        Row::le(vec![(0, 1.0), (1, 2.0)], 4.0),
        Row::le(vec![(0, 3.0), (1, 1.0)], 6.0),
    ];
    let milp = ConcreteMILP {
        lp: LinearProgram::new(vec![-1.0, -1.0], rows.clone(), vec![VarBounds::new(0.0, 5.0); 2]),
        integrality: vec![false; 2],
        input: vec![0.0],
    };
    let target = [4.0, 4.0];
    let problem = TrainingProblem::from_instances(&spec, vec![(milp, target.to_vec())]).unwrap();
    let n_rows = problem.instances[0].n_stacked(&spec);
    let it = TrainerIterate {
        theta: Theta::zeros(&spec, 100.0),
        x_tilde: vec![vec![0.0, 0.0]],
        duals: vec![vec![0.0; n_rows]],
        loss: 0.0,
        residuals: [0.0; 3],
    };
    let x = &bcd_step_x(&it, &problem, &[1.0, 1e3, 1.0], 0.0, Execution::Sequential).unwrap()[0];

    // Oracle: min |x - t|_1 over the region as a 4-variable LP solved by vertex enumeration.
    let mut lifted = vec![];
    for r in &rows {
        lifted.push(r.clone());
    }
    for j in 0..2 {
        lifted.push(Row::le(vec![(j, 1.0), (2 + j, -1.0)], target[j]));
        lifted.push(Row::le(vec![(j, -1.0), (2 + j, -1.0)], -target[j]));
    }
    let mut bounds = vec![VarBounds::new(0.0, 5.0); 2];
    bounds.extend([VarBounds::new(0.0, 20.0); 2]);
    let oracle = LinearProgram::new(vec![0.0, 0.0, 1.0, 1.0], lifted, bounds);
    let (dist, _) = vertex_enumeration(&oracle).unwrap();
    assert_abs_diff_eq!(l1_distance(x, &target), dist, epsilon = 1e-7);
    for r in &rows {
        assert!(r.violation(x) <= 1e-9);
    }
}

#[test]
fn x_step_is_separable_across_instances() {
    let spec = knapsack::default_spec();
    let us = [0.25, 0.9, 1.4];
    let problem = knapsack_problem(&us, &spec);
    let it = random_iterate(&problem, 11);
    let q = [1.0, 3.0, 2.0];
    let fwd = bcd_step_x(&it, &problem, &q, 1e-3, Execution::Sequential).unwrap();
    let order = [2, 0, 1];
    let permuted = TrainingProblem {
        spec: spec.clone(),
        instances: order.iter().map(|&i| problem.instances[i].clone()).collect(),
    };
    let pit = TrainerIterate {
        theta: it.theta.clone(),
        x_tilde: order.iter().map(|&i| it.x_tilde[i].clone()).collect(),
        duals: order.iter().map(|&i| it.duals[i].clone()).collect(),
        loss: 0.0,
        residuals: [0.0; 3],
    };
    let back = bcd_step_x(&pit, &permuted, &q, 1e-3, Execution::Sequential).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert_eq!(back[k], fwd[i]);
    }
}

#[test]
fn dual_step_zeroes_multipliers_at_interior_points() {
    let spec = knapsack::default_spec();
    let problem = knapsack_problem(&[0.5], &spec);
    let mut it = random_iterate(&problem, 5);
    it.theta = Theta::zeros(&spec, 100.0);
    it.x_tilde = vec![vec![3.0, 4.0]];
    let d = &bcd_step_duals(&it, &problem, &[1.0, 1.0, 1e4], 1e-3, Execution::Sequential).unwrap()[0];
    assert!(d.iter().all(|&v| v.abs() <= 1e-9), "{d:?}");
}

#[test]
fn dual_step_with_zero_cost_returns_zero() {
    let spec = knapsack::default_spec();
    let mut problem = knapsack_problem(&[0.5, 1.0], &spec);
    for inst in &mut problem.instances {
        inst.milp.lp.cost = vec![0.0, 0.0];
    }
    let it = random_iterate(&problem, 8);
    for d in bcd_step_duals(&it, &problem, &[1.0, 1.0, 1.0], 1e-3, Execution::Sequential).unwrap() {
        assert!(d.iter().all(|&v| v.abs() <= 1e-9), "{d:?}");
    }
}

/// `min_{d >= 0} |c + A^T d|_1` over two rows in two variables, by
/// enumerating every intersection of the kink lines `(c + A^T d)_j = 0` and
/// `d_r = 0`.
fn l1_fit_oracle(a: [[f64; 2]; 2], c: [f64; 2]) -> f64 {
    let f = |d: [f64; 2]| -> f64 { (0..2).map(|j| (c[j] + a[0][j] * d[0] + a[1][j] * d[1]).abs()).sum() };
    // Lines as (coefficients on d, rhs).
    let mut lines = vec![([1.0, 0.0], 0.0), ([0.0, 1.0], 0.0)];
    for j in 0..2 {
        lines.push(([a[0][j], a[1][j]], -c[j]));
    }
    let mut best = f([0.0, 0.0]);
    for p in 0..lines.len() {
        for r in p + 1..lines.len() {
            let m = vec![lines[p].0.to_vec(), lines[r].0.to_vec()];
            if let Some(d) = crate::oracle::solve_square(&m, &[lines[p].1, lines[r].1]) {
                if d.iter().all(|&v| v >= -1e-12) {
                    best = best.min(f([d[0].max(0.0), d[1].max(0.0)]));
                }
            }
        }
    }
    best
}

#[test]
fn dual_step_matches_l1_fit_oracle() {
    let spec = SurrogateSpec {
        input_dim: 1,
        cuts: vec![],
        feature_map: FeatureMap::univariate(1, 0),
        rhs_mode: RhsMode::Fixed(100.0),
    };
    let cases = [
        ([[1.0, 2.0], [3.0, 1.0]], [-5.0, -5.0]),
        ([[1.0, 2.0], [3.0, 1.0]], [2.0, -1.0]),
        ([[2.0, -1.0], [1.0, 1.0]], [-1.0, -4.0]),
    ];
    for (a, c) in cases {
        let rows = vec![
            Row::le(vec![(0, a[0][0]), (1, a[0][1])], 1.0),
            Row::le(vec![(0, a[1][0]), (1, a[1][1])], 1.0),
        ];
        let milp = ConcreteMILP {
            lp: LinearProgram::new(c.to_vec(), rows, vec![VarBounds::FREE; 2]),
            integrality: vec![false; 2],
            input: vec![0.0],
        };
        let problem = TrainingProblem::from_instances(&spec, vec![(milp, vec![0.0, 0.0])]).unwrap();
        let mut it = TrainerIterate {
            theta: Theta::zeros(&spec, 100.0),
            x_tilde: vec![vec![0.0, 0.0]],
            duals: vec![vec![0.5, 0.5]],
            loss: 0.0,
            residuals: [0.0; 3],
        };
        it.duals = bcd_step_duals(&it, &problem, &[1.0, 1.0, 0.0], 0.0, Execution::Sequential).unwrap();
        it.refresh(&problem);
        assert_abs_diff_eq!(it.residuals[0], l1_fit_oracle(a, c), epsilon = 1e-9);
    }
}

fn assert_blocks_monotone(problem: &TrainingProblem, mut it: TrainerIterate, q: [f64; 3], sweeps: usize) {
    let w = 1e-3;
    for _ in 0..sweeps {
        let f0 = penalty_objective(&it, problem, &q);
        it.theta = bcd_step_theta(&it, problem, &q, w).unwrap();
        let f1 = penalty_objective(&it, problem, &q);
        it.x_tilde = bcd_step_x(&it, problem, &q, w, Execution::Sequential).unwrap();
        let f2 = penalty_objective(&it, problem, &q);
        it.duals = bcd_step_duals(&it, problem, &q, w, Execution::Sequential).unwrap();
        let f3 = penalty_objective(&it, problem, &q);
        let slack = 1e-8 * (1.0 + f0.abs());
        assert!(f1 <= f0 + slack, "theta block {f0} -> {f1}");
        assert!(f2 <= f1 + slack, "x block {f1} -> {f2}");
        assert!(f3 <= f2 + slack, "dual block {f2} -> {f3}");
    }
}

#[test]
fn block_steps_never_increase_the_penalty() {
    let spec = knapsack::default_spec();
    let problem = knapsack_problem(&[0.15, 0.45, 0.8, 1.2, 1.45], &spec);
    assert_blocks_monotone(&problem, random_iterate(&problem, 21), [1.0, 2.0, 3.0], 10);
    let start = TrainerIterate::at_surrogate_optimum(Theta::zeros(&spec, 100.0), &problem, Execution::Sequential).unwrap();
    assert_blocks_monotone(&problem, start, [1.0, 1.0, 1.0], 10);
}

#[test]
fn parallel_and_sequential_iterates_agree() {
    let spec = knapsack::default_spec();
    let problem = knapsack_problem(&[0.2, 0.5, 0.7, 1.0, 1.3], &spec);
    let it = random_iterate(&problem, 2);
    let q = [2.0, 1.0, 1.5];
    for exec in [Execution::Parallel, Execution::Workers(3)] {
        assert_eq!(
            bcd_step_x(&it, &problem, &q, 1e-3, Execution::Sequential).unwrap(),
            bcd_step_x(&it, &problem, &q, 1e-3, exec).unwrap()
        );
        assert_eq!(
            bcd_step_duals(&it, &problem, &q, 1e-3, Execution::Sequential).unwrap(),
            bcd_step_duals(&it, &problem, &q, 1e-3, exec).unwrap()
        );
    }
}

#[test]
fn training_without_cuts_is_a_no_op() {
    let spec = SurrogateSpec::dense(0, 2, 1, 2);
    let problem = knapsack_problem(&[0.3, 0.9], &spec);
    let (theta, report) = train(&problem, &TrainerConfig::default(), Execution::Sequential).unwrap();
    assert!(theta.is_empty());
    assert_eq!(report.status, TrainingStatus::Converged);
    assert_eq!(report.outer_iterations, 0);
}

#[test]
fn integral_relaxations_converge_immediately() {
    // At u = 0.2 and u = 1.45 the relaxation is not integral; pick inputs
    // whose relaxation optimum is the MILP optimum.
    let spec = knapsack::default_spec();
    let candidates: Vec<f64> = (1..=140).map(|k| 0.1 + 0.01 * k as f64).collect();
    let us: Vec<f64> = candidates
        .into_iter()
        .filter(|&u| {
            let milp = knapsack::instantiate(u);
            let relax = solve_lp(&milp.lp, 1e-9).unwrap();
            let x = solve_milp(&milp, &MilpOptions::default()).unwrap().x.unwrap();
            l1_distance(&relax.x, &x) <= 1e-9
        })
        .take(3)
        .collect();
    assert!(!us.is_empty());
    let problem = knapsack_problem(&us, &spec);
    let (theta, report) = train(&problem, &TrainerConfig::default(), Execution::Sequential).unwrap();
    assert_eq!(report.status, TrainingStatus::Converged);
    assert!(report.best_loss <= 1e-9);
    assert!(theta.values.iter().all(|&t| t == 0.0));
    assert!(report.outer_iterations <= 1);
}

#[test]
fn penalty_weights_never_decrease() {
    let spec = knapsack::default_spec();
    let problem = knapsack_problem(&[0.2, 0.61, 1.45, 0.9], &spec);
    let cfg = TrainerConfig {
        max_outer: 4,
        max_inner: 3,
        ..TrainerConfig::default()
    };
    let (theta, report) = train(&problem, &cfg, Execution::Sequential).unwrap();
    assert!(theta.within_box());
    for w in report.q_trace.windows(2) {
        for k in 0..3 {
            assert!(w[1][k] >= w[0][k]);
        }
    }
    assert_eq!(report.loss_trace.len(), report.residual_trace.len());
    if report.status == TrainingStatus::Converged {
        let tol = cfg.feasibility_tol(problem.len());
        assert!(report.best_loss.is_finite());
        assert!(report.residual_trace.iter().any(|r| r.iter().all(|&v| v < tol)));
    }
}

#[test]
fn zero_residuals_certify_surrogate_optimality() {
    let spec = knapsack::default_spec();
    let problem = knapsack_problem(&[0.35, 1.05], &spec);
    let it = TrainerIterate::at_surrogate_optimum(published(&spec), &problem, Execution::Sequential).unwrap();
    assert!(it.residuals.iter().all(|&r| r <= 1e-6));
    for (i, inst) in problem.instances.iter().enumerate() {
        let lp = build_surrogate_lp(&inst.milp, &inst.cuts(&it.theta, &spec)).unwrap();
        let sol = solve_lp(&lp, 1e-9).unwrap();
        assert_abs_diff_eq!(lp.objective(&it.x_tilde[i]), sol.objective, epsilon = 1e-6);
    }
}

#[test]
fn config_defaults_and_validation() {
    let cfg: TrainerConfig = serde_json::from_str("{}").unwrap();
    assert_eq!(cfg, TrainerConfig::default());
    assert_abs_diff_eq!(cfg.feasibility_tol(50), 5.1e-4, epsilon = 1e-15);
    let bad = TrainerConfig {
        tol_inner: 0.0,
        ..TrainerConfig::default()
    };
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
}

#[test]
fn label_shape_is_checked() {
    let spec = knapsack::default_spec();
    let err = TrainingProblem::from_instances(&spec, vec![(knapsack::instantiate(0.5), vec![1.0])]).unwrap_err();
    assert!(matches!(err, Error::InputShape { expected: 2, got: 1 }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_iterates_descend_blockwise(seed in any::<u64>(), q1 in 0.1f64..5.0, q2 in 0.1f64..5.0, q3 in 0.1f64..5.0) {
        let spec = knapsack::default_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let us: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.5)).collect();
        let problem = knapsack_problem(&us, &spec);
        assert_blocks_monotone(&problem, random_iterate(&problem, seed), [q1, q2, q3], 3);
    }
}
