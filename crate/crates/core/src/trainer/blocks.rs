//! The three block subproblems, each assembled as one LP.
//!
//! Every `|.|` term gets a split pair `t+ - t-` and every `max(0, .)` term an
//! epigraph column `h >= 0`. The block variable moves as `prev + p+ - p-`, so
//! the l1 prox term is `w * (p+ + p-)`.

use crate::error::{Error, Result};
use crate::lp::{solve_lp, DEFAULT_TOL};
use crate::model::{LinearProgram, Row, RhsMode, VarBounds};
use crate::model::Theta;
use crate::par::{map_indexed, Execution};

use super::{PreparedInstance, TrainerIterate, TrainingProblem};

#[derive(Default)]
struct LpBuilder {
    cost: Vec<f64>,
    bounds: Vec<VarBounds>,
    rows: Vec<Row>,
}

impl LpBuilder {
    fn col(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.cost.push(cost);
        self.bounds.push(VarBounds::new(lo, hi));
        self.cost.len() - 1
    }

    fn pair(&mut self, cost: f64) -> (usize, usize) {
        (self.col(cost, 0.0, f64::INFINITY), self.col(cost, 0.0, f64::INFINITY))
    }

    /// `expr - t+ + t- = rhs` with `t+, t-` costing `weight` each.
    fn abs_row(&mut self, mut expr: Vec<(usize, f64)>, rhs: f64, weight: f64) {
        let (tp, tm) = self.pair(weight);
        expr.push((tp, -1.0));
        expr.push((tm, 1.0));
        self.rows.push(Row::eq(expr, rhs));
    }

    /// `expr - h <= rhs` with `h >= 0` costing `weight`.
    fn hinge_row(&mut self, mut expr: Vec<(usize, f64)>, rhs: f64, weight: f64) {
        let h = self.col(weight, 0.0, f64::INFINITY);
        expr.push((h, -1.0));
        self.rows.push(Row::le(expr, rhs));
    }

    fn solve(self, what: &str) -> Result<Vec<f64>> {
        let lp = LinearProgram::new(self.cost, self.rows, self.bounds);
        let sol = solve_lp(&lp, DEFAULT_TOL)?;
        if !sol.is_optimal() {
            return Err(Error::SolverFailure {
                iterations: sol.iterations,
                reason: format!("{what} block LP is {:?}", sol.status),
            });
        }
        Ok(sol.x)
    }
}

/// Movement columns for a block of size `len`: `(p+, p-)` index pairs.
fn moves(b: &mut LpBuilder, w: f64, caps: impl Iterator<Item = (f64, f64)>) -> Vec<(usize, usize)> {
    caps.map(|(up, down)| (b.col(w, 0.0, up), b.col(w, 0.0, down))).collect()
}

fn through_moves(mv: &[(usize, usize)], coeffs: impl Iterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for (j, a) in coeffs {
        if a != 0.0 {
            out.push((mv[j].0, a));
            out.push((mv[j].1, -a));
        }
    }
    out
}

fn apply_moves(prev: &[f64], mv: &[(usize, usize)], sol: &[f64]) -> Vec<f64> {
    prev.iter().zip(mv).map(|(p, &(a, b))| p + sol[a] - sol[b]).collect()
}

fn x_block(inst: &PreparedInstance, rows: &[Row], x: &[f64], d: &[f64], q: &[f64; 3], w: f64) -> Result<Vec<f64>> {
    let n = inst.n_vars();
    let mut b = LpBuilder::default();
    let mv = moves(&mut b, w, (0..n).map(|_| (f64::INFINITY, f64::INFINITY)));
    for j in 0..n {
        b.abs_row(through_moves(&mv, [(j, 1.0)].into_iter()), inst.x_star[j] - x[j], 1.0);
    }
    if q[1] > 0.0 {
        for row in rows.iter().filter(|r| !r.coeffs.is_empty()) {
            let expr = through_moves(&mv, row.coeffs.iter().copied());
            if !expr.is_empty() {
                b.hinge_row(expr, row.rhs - row.activity(x), q[1]);
            }
        }
    }
    if q[2] > 0.0 {
        let mut g = vec![0.0; n];
        let mut db = 0.0;
        for (row, &dr) in rows.iter().zip(d) {
            if dr != 0.0 {
                db += dr * row.rhs;
                for &(j, a) in &row.coeffs {
                    g[j] += dr * a;
                }
            }
        }
        let expr = through_moves(&mv, g.iter().copied().enumerate());
        if !expr.is_empty() {
            let gx: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
            b.abs_row(expr, db - gx, q[2]);
        }
    }
    let sol = b.solve("x")?;
    Ok(apply_moves(x, &mv, &sol))
}

fn dual_block(inst: &PreparedInstance, rows: &[Row], x: &[f64], d: &[f64], q: &[f64; 3], w: f64) -> Result<Vec<f64>> {
    let n = inst.n_vars();
    let mut b = LpBuilder::default();
    let mv = moves(&mut b, w, d.iter().map(|&dr| (f64::INFINITY, dr.max(0.0))));
    if q[0] > 0.0 {
        let mut by_var: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut grad = inst.cost().to_vec();
        for (r, (row, &dr)) in rows.iter().zip(d).enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    by_var[j].push((mv[r].0, a));
                    by_var[j].push((mv[r].1, -a));
                    grad[j] += dr * a;
                }
            }
        }
        for (expr, g) in by_var.into_iter().zip(grad) {
            if !expr.is_empty() {
                b.abs_row(expr, -g, q[0]);
            }
        }
    }
    if q[2] > 0.0 {
        let slack: Vec<f64> = rows.iter().map(|r| r.activity(x) - r.rhs).collect();
        let expr = through_moves(&mv, slack.iter().copied().enumerate());
        if !expr.is_empty() {
            let sd: f64 = slack.iter().zip(d).map(|(s, d)| s * d).sum();
            b.abs_row(expr, -sd, q[2]);
        }
    }
    let sol = b.solve("dual")?;
    Ok(apply_moves(d, &mv, &sol).into_iter().map(|v| v.max(0.0)).collect())
}

/// Minimize over each `x_i` with `theta` and the multipliers fixed.
pub fn bcd_step_x(iter: &TrainerIterate, problem: &TrainingProblem, q: &[f64; 3], prox_weight: f64, exec: Execution) -> Result<Vec<Vec<f64>>> {
    map_indexed(exec, problem.len(), |i| {
        let inst = &problem.instances[i];
        let rows = inst.stacked(&iter.theta, &problem.spec);
        x_block(inst, &rows, &iter.x_tilde[i], &iter.duals[i], q, prox_weight).map_err(|e| e.at_instance(i))
    })
}

/// Minimize over each `d_i >= 0` with `theta` and `x` fixed.
pub fn bcd_step_duals(iter: &TrainerIterate, problem: &TrainingProblem, q: &[f64; 3], prox_weight: f64, exec: Execution) -> Result<Vec<Vec<f64>>> {
    map_indexed(exec, problem.len(), |i| {
        let inst = &problem.instances[i];
        let rows = inst.stacked(&iter.theta, &problem.spec);
        dual_block(inst, &rows, &iter.x_tilde[i], &iter.duals[i], q, prox_weight).map_err(|e| e.at_instance(i))
    })
}

/// Affine function of `theta`: `constant + sum coef * theta[index]`.
#[derive(Default, Clone)]
struct Affine {
    constant: f64,
    terms: Vec<(usize, f64)>,
}

impl Affine {
    fn add_scaled(&mut self, other: &Affine, s: f64) {
        self.constant += s * other.constant;
        self.terms.extend(other.terms.iter().map(|&(k, c)| (k, s * c)));
    }
}

/// Minimize over `theta` in its box with `x` and the multipliers fixed. One
/// coupled LP over all instances; only rows that actually depend on `theta`
/// are assembled.
pub fn bcd_step_theta(iter: &TrainerIterate, problem: &TrainingProblem, q: &[f64; 3], prox_weight: f64) -> Result<Theta> {
    let spec = &problem.spec;
    let theta = &iter.theta;
    if theta.is_empty() {
        return Ok(theta.clone());
    }
    let mut stationarity: Vec<Affine> = Vec::new();
    let mut hinges: Vec<Affine> = Vec::new();
    let mut comps: Vec<Affine> = Vec::new();

    for (i, inst) in problem.instances.iter().enumerate() {
        let x = &iter.x_tilde[i];
        let d = &iter.duals[i];
        let nb = inst.base.len();
        let (lam, mu) = d.split_at(nb);
        let mut grad = inst.cost().to_vec();
        let mut comp = Affine::default();
        for (row, &l) in inst.base.iter().zip(lam) {
            if l != 0.0 {
                comp.constant += l * (row.activity(x) - row.rhs);
                for &(j, a) in &row.coeffs {
                    grad[j] += l * a;
                }
            }
        }
        let mut grad_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); inst.n_vars()];
        for (v, cut) in spec.cuts.iter().enumerate() {
            let phi = &inst.phi[v];
            let mut h = Affine::default();
            for (s, &j) in cut.vars.iter().enumerate() {
                for (k, &f) in phi.iter().enumerate() {
                    if f != 0.0 {
                        let idx = theta.index(v, s, k);
                        if x[j] != 0.0 {
                            h.terms.push((idx, f * x[j]));
                        }
                        if mu[v] != 0.0 {
                            grad_terms[j].push((idx, mu[v] * f));
                        }
                    }
                }
            }
            match spec.rhs_mode {
                RhsMode::Fixed(bv) => h.constant -= bv,
                RhsMode::Learned => {
                    let s = cut.vars.len();
                    h.terms
                        .extend(phi.iter().enumerate().filter(|(_, &f)| f != 0.0).map(|(k, &f)| (theta.index(v, s, k), -f)));
                }
            }
            if mu[v] != 0.0 {
                comp.add_scaled(&h, mu[v]);
            }
            hinges.push(h);
        }
        for (g, terms) in grad.into_iter().zip(grad_terms) {
            if !terms.is_empty() {
                stationarity.push(Affine { constant: g, terms });
            }
        }
        if !comp.terms.is_empty() {
            comps.push(comp);
        }
    }

    let mut b = LpBuilder::default();
    let mut col_of: Vec<Option<(usize, usize)>> = vec![None; theta.len()];
    let tmax = theta.theta_max;
    let w = prox_weight;
    let mut expr_of = |b: &mut LpBuilder, a: &Affine| -> (Vec<(usize, f64)>, f64) {
        let mut expr = Vec::with_capacity(2 * a.terms.len());
        let mut rhs = -a.constant;
        for &(k, c) in &a.terms {
            let (pp, pm) = *col_of[k].get_or_insert_with(|| {
                let t = theta.values[k];
                (b.col(w, 0.0, (tmax - t).max(0.0)), b.col(w, 0.0, (tmax + t).max(0.0)))
            });
            rhs -= c * theta.values[k];
            expr.push((pp, c));
            expr.push((pm, -c));
        }
        (expr, rhs)
    };
    if q[0] > 0.0 {
        for a in &stationarity {
            let (e, r) = expr_of(&mut b, a);
            b.abs_row(e, r, q[0]);
        }
    }
    if q[1] > 0.0 {
        for a in hinges.iter().filter(|a| !a.terms.is_empty()) {
            let (e, r) = expr_of(&mut b, a);
            b.hinge_row(e, r, q[1]);
        }
    }
    if q[2] > 0.0 {
        for a in &comps {
            let (e, r) = expr_of(&mut b, a);
            b.abs_row(e, r, q[2]);
        }
    }
    if b.rows.is_empty() {
        return Ok(theta.clone());
    }
    let sol = b.solve("theta")?;
    let mut out = theta.clone();
    for (k, c) in col_of.iter().enumerate() {
        if let Some((pp, pm)) = *c {
            out.values[k] += sol[pp] - sol[pm];
        }
    }
    out.clamp_to_box();
    Ok(out)
}
