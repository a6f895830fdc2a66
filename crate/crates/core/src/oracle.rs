//! Brute-force reference solvers for small instances.
//!
//! These exist to cross-check the simplex and branch-and-bound paths and are
//! exponential in the problem size. Integer enumeration completes the
//! continuous block by vertex enumeration when it has at most
//! [`VERTEX_LIMIT`] variables and by the LP kernel otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{ConcreteMILP, LinearProgram, Row, VarBounds};

const TOL: f64 = 1e-9;
pub const VERTEX_LIMIT: usize = 3;

/// Solve `m x = rhs` for square `m` (row-major) by Gaussian elimination.
pub fn solve_square(m: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .zip(rhs)
        .map(|(row, &b)| {
            let mut r = row.clone();
            r.push(b);
            r
        })
        .collect();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-10 {
            return None;
        }
        a.swap(k, p);
        for i in 0..n {
            if i != k {
                let f = a[i][k] / a[k][k];
                if f != 0.0 {
                    for c in k..=n {
                        a[i][c] -= f * a[k][c];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

fn hyperplanes(lp: &LinearProgram) -> Vec<(Vec<f64>, f64)> {
    let n = lp.n_vars;
    let mut out = Vec::new();
    for row in &lp.rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &row.coeffs {
            a[j] += v;
        }
        out.push((a, row.rhs));
    }
    for (j, b) in lp.bounds.iter().enumerate() {
        for v in [b.lo, b.hi] {
            if v.is_finite() {
                let mut a = vec![0.0; n];
                a[j] = 1.0;
                out.push((a, v));
            }
        }
    }
    out
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Optimum of a bounded LP by enumerating every basic point. Returns `None`
/// when no vertex is feasible. The LP must be bounded and have a vertex.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<(f64, Vec<f64>)> {
    let n = lp.n_vars;
    if n == 0 {
        return (lp.max_violation(&[]) <= TOL).then(|| (lp.objective_offset, vec![]));
    }
    let planes = hyperplanes(lp);
    let scale = 1.0 + planes.iter().fold(0.0f64, |a, p| a.max(p.1.abs()));
    let mut best: Option<(f64, Vec<f64>)> = None;
    combinations(planes.len(), n, |sel| {
        let m: Vec<Vec<f64>> = sel.iter().map(|&i| planes[i].0.clone()).collect();
        let rhs: Vec<f64> = sel.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(&m, &rhs) {
            if lp.max_violation(&x) <= 1e-9 * scale {
                let obj = lp.objective(&x);
                if best.as_ref().map_or(true, |(b, _)| obj < *b - 1e-12) {
                    best = Some((obj, x));
                }
            }
        }
    });
    best
}

fn integer_grid(milp: &ConcreteMILP, mut f: impl FnMut(&[f64])) {
    let ints = milp.integer_indices();
    let ranges: Vec<(i64, i64)> = ints
        .iter()
        .map(|&j| {
            let b = milp.lp.bounds[j];
            assert!(b.lo.is_finite() && b.hi.is_finite(), "integer variables need finite bounds");
            (b.lo.ceil() as i64, b.hi.floor() as i64)
        })
        .collect();
    if ranges.iter().any(|(l, h)| l > h) {
        return;
    }
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut point = vec![0.0; ints.len()];
    loop {
        for (p, &c) in point.iter_mut().zip(&cur) {
            *p = c as f64;
        }
        f(&point);
        let mut k = 0;
        loop {
            if k == cur.len() {
                return;
            }
            if cur[k] < ranges[k].1 {
                cur[k] += 1;
                break;
            }
            cur[k] = ranges[k].0;
            k += 1;
        }
    }
}

fn complete(milp: &ConcreteMILP, z: &[f64]) -> Option<(f64, Vec<f64>)> {
    let lp = fix_integers(milp, z);
    if milp.n_vars() - milp.integer_indices().len() <= VERTEX_LIMIT {
        return vertex_enumeration(&lp);
    }
    match crate::lp::solve_lp(&lp, crate::lp::DEFAULT_TOL) {
        Ok(sol) if sol.is_optimal() => Some((sol.objective, sol.x)),
        _ => None,
    }
}

/// Fix the integer block of `milp` to `z` and return the LP over the rest.
pub fn fix_integers(milp: &ConcreteMILP, z: &[f64]) -> LinearProgram {
    let mut lp = milp.lp.clone();
    for (&j, &v) in milp.integer_indices().iter().zip(z) {
        lp.bounds[j] = VarBounds::fixed(v);
    }
    lp
}

/// Exact MILP optimum by enumerating every integer assignment in the bound box
/// and completing the continuous block. Ties keep the first point in
/// lexicographic order of the integer block (first index varying fastest).
pub fn exhaustive_milp(milp: &ConcreteMILP) -> Option<(f64, Vec<f64>)> {
    let ints = milp.integer_indices();
    let mut best: Option<(f64, Vec<f64>)> = None;
    integer_grid(milp, |z| {
        let candidate = if ints.len() == milp.n_vars() {
            (milp.lp.max_violation(z) <= 1e-9).then(|| (milp.lp.objective(z), z.to_vec()))
        } else {
            complete(milp, z)
        };
        if let Some((obj, x)) = candidate {
            if best.as_ref().map_or(true, |(b, _)| obj < *b - 1e-9) {
                best = Some((obj, x));
            }
        }
    });
    best
}

/// Smallest l1 distance from `target` (integer block only) to an integer block
/// that admits a feasible completion.
pub fn nearest_feasible_integer_block(milp: &ConcreteMILP, target: &[f64]) -> Option<(f64, Vec<f64>)> {
    let ints = milp.integer_indices();
    let pure = ints.len() == milp.n_vars();
    let mut best: Option<(f64, Vec<f64>)> = None;
    integer_grid(milp, |z| {
        let d: f64 = z.iter().zip(&ints).map(|(v, &j)| (v - target[j]).abs()).sum();
        if best.as_ref().map_or(false, |(b, _)| d >= *b - 1e-9) {
            return;
        }
        let feasible = if pure {
            milp.lp.max_violation(z) <= 1e-9
        } else {
            complete(&feasibility_only(milp), z).is_some()
        };
        if feasible {
            best = Some((d, z.to_vec()));
        }
    });
    best
}

fn feasibility_only(milp: &ConcreteMILP) -> ConcreteMILP {
    let mut milp = milp.clone();
    milp.lp.cost.iter_mut().for_each(|c| *c = 0.0);
    milp
}

/// A random LP that is feasible at a hidden point and bounded by a box on
/// every variable. Every seventh row is an equality.
pub fn random_lp(n: usize, m: usize, seed: u64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut rows = Vec::new();
    for r in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.8) {
                coeffs.push((j, rng.gen_range(-5.0..5.0)));
            }
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        if r % 7 == 6 {
            rows.push(Row::eq(coeffs, act));
        } else {
            rows.push(Row::le(coeffs, act + rng.gen_range(0.0..4.0)));
        }
    }
    let bounds = (0..n)
        .map(|_| match rng.gen_range(0..4) {
            0 => VarBounds::new(-10.0, 10.0),
            1 => VarBounds::new(-4.0, 6.0),
            2 => VarBounds::new(-5.0, 5.0),
            _ => VarBounds::new(-8.0, 3.5),
        })
        .collect();
    let cost = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    LinearProgram::new(cost, rows, bounds)
}

/// A random MILP with `n_int` integer variables in `[0, box_hi]` followed by
/// `n_cont` continuous variables in `[0, 10]`. Rows are `<=` with
/// nonnegative right-hand sides, so the origin is always feasible.
pub fn random_milp(n_int: usize, n_cont: usize, m: usize, box_hi: f64, seed: u64) -> ConcreteMILP {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_int + n_cont;
    let mut rows = Vec::new();
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coeffs.push((j, rng.gen_range(-3.0f64..6.0).round()));
            }
        }
        rows.push(Row::le(coeffs, rng.gen_range(2.0..25.0f64).round() + 0.5));
    }
    let mut bounds = vec![VarBounds::new(0.0, box_hi); n_int];
    bounds.extend(std::iter::repeat(VarBounds::new(0.0, 10.0)).take(n_cont));
    let cost = (0..n).map(|_| rng.gen_range(-5.0..2.0)).collect();
    let mut integrality = vec![true; n_int];
    integrality.extend(std::iter::repeat(false).take(n_cont));
    ConcreteMILP {
        lp: LinearProgram::new(cost, rows, bounds),
        integrality,
        input: vec![],
    }
}
