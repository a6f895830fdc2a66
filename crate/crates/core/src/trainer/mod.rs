//! Decision-focused training of the cut coefficients.
//!
//! Each training pair `(u_i, x*_i)` asks the surrogate LP at `u_i` to have
//! `x*_i` as its optimum. The lower-level LPs are replaced by their KKT
//! conditions and those are moved into the objective with penalty weights `q`:
//!
//! ```text
//!   F = sum_i |x*_i - x_i|_1
//!     + q1 sum_i |c_i + A_i'^T d_i|_1
//!     + q2 sum_i sum_r max(0, (A_i' x_i - b_i')_r)
//!     + q3 sum_i |d_i^T (A_i' x_i - b_i')|
//! ```
//!
//! `A_i'` stacks the original rows (equalities as two inequalities), finite
//! variable bounds and the learned cuts; `d_i >= 0` are the matching
//! multipliers. `F` is minimized block by block over `theta`, `{x_i}` and
//! `{d_i}`, each block an LP, and `q` grows with the remaining violation.

mod blocks;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, DEFAULT_TOL};
use crate::model::{build_surrogate_lp, ConcreteMILP, Row, RhsMode, Sense, SurrogateSpec, Theta};
use crate::par::{map_indexed, Execution};
use crate::problems::Family;

pub use blocks::{bcd_step_duals, bcd_step_theta, bcd_step_x};

/// One labelled input. Serialized as a dataset line `{"u", "x_star", "obj"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingItem {
    pub u: Vec<f64>,
    pub x_star: Vec<f64>,
    pub obj: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub family: Family,
    pub seed: u64,
    pub items: Vec<TrainingItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyState {
    pub q: [f64; 3],
    pub rho_bar: f64,
    pub residuals: [f64; 3],
}

impl PenaltyState {
    pub fn new(q0: [f64; 3], rho_bar: f64) -> Self {
        PenaltyState {
            q: q0,
            rho_bar,
            residuals: [0.0; 3],
        }
    }

    /// `q += rho_bar * residuals`; never decreases `q`.
    pub fn update(&mut self, residuals: [f64; 3]) {
        self.residuals = residuals;
        for (q, r) in self.q.iter_mut().zip(residuals) {
            *q += self.rho_bar * r.max(0.0);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainerIterate {
    pub theta: Theta,
    pub x_tilde: Vec<Vec<f64>>,
    /// Multipliers on the stacked rows: original, bound rows, then cuts.
    pub duals: Vec<Vec<f64>>,
    pub loss: f64,
    pub residuals: [f64; 3],
}

/// One training pair with its stacked fixed rows precomputed.
#[derive(Clone, Debug)]
pub struct PreparedInstance {
    pub milp: ConcreteMILP,
    pub x_star: Vec<f64>,
    /// Original rows as `<=` (equalities split) followed by finite bound rows.
    pub base: Vec<Row>,
    /// Feature vector of each cut at this input.
    pub phi: Vec<Vec<f64>>,
}

impl PreparedInstance {
    pub fn new(milp: ConcreteMILP, x_star: Vec<f64>, spec: &SurrogateSpec) -> Result<Self> {
        let n = milp.n_vars();
        if x_star.len() != n {
            return Err(Error::InputShape {
                expected: n,
                got: x_star.len(),
            });
        }
        spec.validate(n)?;
        let mut base = Vec::new();
        for row in &milp.lp.rows {
            base.push(Row::le(row.coeffs.clone(), row.rhs));
            if row.sense == Sense::Eq {
                base.push(Row::le(row.coeffs.iter().map(|&(j, a)| (j, -a)).collect(), -row.rhs));
            }
        }
        for (j, b) in milp.lp.bounds.iter().enumerate() {
            if b.lo.is_finite() {
                base.push(Row::le(vec![(j, -1.0)], -b.lo));
            }
            if b.hi.is_finite() {
                base.push(Row::le(vec![(j, 1.0)], b.hi));
            }
        }
        let phi = (0..spec.n_cuts())
            .map(|v| spec.features(v, &milp.input))
            .collect::<Result<_>>()?;
        Ok(PreparedInstance {
            milp,
            x_star,
            base,
            phi,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.milp.n_vars()
    }

    pub fn n_stacked(&self, spec: &SurrogateSpec) -> usize {
        self.base.len() + spec.n_cuts()
    }

    pub fn cost(&self) -> &[f64] {
        &self.milp.lp.cost
    }

    pub fn cuts(&self, theta: &Theta, spec: &SurrogateSpec) -> Vec<Row> {
        spec.cuts
            .iter()
            .enumerate()
            .map(|(v, cut)| {
                let phi = &self.phi[v];
                let poly = |s: usize| -> f64 { phi.iter().enumerate().map(|(k, f)| theta.get(v, s, k) * f).sum() };
                let coeffs = cut.vars.iter().enumerate().map(|(s, &j)| (j, poly(s))).collect();
                let rhs = match spec.rhs_mode {
                    RhsMode::Fixed(b) => b,
                    RhsMode::Learned => poly(cut.vars.len()),
                };
                Row::le(coeffs, rhs)
            })
            .collect()
    }

    /// All stacked `<=` rows at `theta`.
    pub fn stacked(&self, theta: &Theta, spec: &SurrogateSpec) -> Vec<Row> {
        let mut rows = self.base.clone();
        rows.extend(self.cuts(theta, spec));
        rows
    }

    /// Solve the surrogate LP and express its duals on the stacked rows.
    pub fn surrogate_kkt_point(&self, theta: &Theta, spec: &SurrogateSpec) -> Result<(Vec<f64>, Vec<f64>)> {
        let cuts = self.cuts(theta, spec);
        let lp = build_surrogate_lp(&self.milp, &cuts)?;
        let sol = solve_lp(&lp, DEFAULT_TOL)?;
        if !sol.is_optimal() {
            return Err(Error::SolverFailure {
                iterations: sol.iterations,
                reason: format!("surrogate LP is {:?}", sol.status),
            });
        }
        let n_orig = self.milp.lp.rows.len();
        let mut d = Vec::with_capacity(self.n_stacked(spec));
        for (r, row) in self.milp.lp.rows.iter().enumerate() {
            let y = sol.row_duals[r];
            match row.sense {
                Sense::Le => d.push(y.max(0.0)),
                Sense::Eq => {
                    d.push(y.max(0.0));
                    d.push((-y).max(0.0));
                }
            }
        }
        for (j, b) in self.milp.lp.bounds.iter().enumerate() {
            let rc = sol.reduced_costs[j];
            if b.lo.is_finite() {
                d.push(rc.max(0.0));
            }
            if b.hi.is_finite() {
                d.push((-rc).max(0.0));
            }
        }
        d.extend(sol.row_duals[n_orig..].iter().map(|y| y.max(0.0)));
        Ok((sol.x, d))
    }
}

/// A training set instantiated against a cut structure.
#[derive(Clone, Debug)]
pub struct TrainingProblem {
    pub spec: SurrogateSpec,
    pub instances: Vec<PreparedInstance>,
}

impl TrainingProblem {
    pub fn new(data: &TrainingSet, spec: &SurrogateSpec) -> Result<Self> {
        let instances = data
            .items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let milp = data.family.instantiate(&item.u).map_err(|e| e.at_instance(i))?;
                PreparedInstance::new(milp, item.x_star.clone(), spec).map_err(|e| e.at_instance(i))
            })
            .collect::<Result<_>>()?;
        Ok(TrainingProblem {
            spec: spec.clone(),
            instances,
        })
    }

    pub fn from_instances(spec: &SurrogateSpec, pairs: Vec<(ConcreteMILP, Vec<f64>)>) -> Result<Self> {
        let instances = pairs
            .into_iter()
            .map(|(m, x)| PreparedInstance::new(m, x, spec))
            .collect::<Result<_>>()?;
        Ok(TrainingProblem {
            spec: spec.clone(),
            instances,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

pub fn decision_loss(x_tilde: &[Vec<f64>], problem: &TrainingProblem) -> f64 {
    x_tilde
        .iter()
        .zip(&problem.instances)
        .map(|(x, inst)| l1_distance(x, &inst.x_star))
        .sum()
}

pub(crate) fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Residuals of one instance: stationarity, primal violation, complementarity.
pub(crate) fn instance_residuals(inst: &PreparedInstance, rows: &[Row], x: &[f64], d: &[f64]) -> [f64; 3] {
    let mut grad = inst.cost().to_vec();
    let mut violation = 0.0;
    let mut comp = 0.0;
    for (row, &dr) in rows.iter().zip(d) {
        let s = row.activity(x) - row.rhs;
        violation += s.max(0.0);
        comp += dr * s;
        if dr != 0.0 {
            for &(j, a) in &row.coeffs {
                grad[j] += dr * a;
            }
        }
    }
    [grad.iter().map(|g| g.abs()).sum(), violation, comp.abs()]
}

/// The three penalty sums at the current iterate.
pub fn kkt_residuals(iter: &TrainerIterate, problem: &TrainingProblem) -> [f64; 3] {
    let mut total = [0.0; 3];
    for (i, inst) in problem.instances.iter().enumerate() {
        let rows = inst.stacked(&iter.theta, &problem.spec);
        let r = instance_residuals(inst, &rows, &iter.x_tilde[i], &iter.duals[i]);
        for k in 0..3 {
            total[k] += r[k];
        }
    }
    total
}

pub fn penalty_objective(iter: &TrainerIterate, problem: &TrainingProblem, q: &[f64; 3]) -> f64 {
    let r = kkt_residuals(iter, problem);
    decision_loss(&iter.x_tilde, problem) + q[0] * r[0] + q[1] * r[1] + q[2] * r[2]
}

impl TrainerIterate {
    /// Recompute `loss` and `residuals` from the current blocks.
    pub fn refresh(&mut self, problem: &TrainingProblem) {
        self.loss = decision_loss(&self.x_tilde, problem);
        self.residuals = kkt_residuals(self, problem);
    }

    /// Primal and dual optima of every surrogate LP at `theta`.
    pub fn at_surrogate_optimum(theta: Theta, problem: &TrainingProblem, exec: Execution) -> Result<Self> {
        let points = map_indexed(exec, problem.len(), |i| {
            problem.instances[i]
                .surrogate_kkt_point(&theta, &problem.spec)
                .map_err(|e| e.at_instance(i))
        })?;
        let (x_tilde, duals) = points.into_iter().unzip();
        let mut it = TrainerIterate {
            theta,
            x_tilde,
            duals,
            loss: 0.0,
            residuals: [0.0; 3],
        };
        it.refresh(problem);
        Ok(it)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub q0: [f64; 3],
    pub rho_bar: f64,
    /// Relative decrease of the penalty objective that ends an inner loop.
    pub tol_inner: f64,
    pub max_inner: usize,
    /// Largest residual accepted as feasible; `None` means `1e-5 (1 + N)`.
    pub tol_feas: Option<f64>,
    pub max_outer: usize,
    pub prox_weight: f64,
    pub theta_max: f64,
    /// After each sweep, also try the exact surrogate optimum at the new
    /// `theta` and keep it when it lowers the penalty objective.
    pub surrogate_restart: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            q0: [1.0, 1.0, 1.0],
            rho_bar: 2.0,
            tol_inner: 1e-4,
            max_inner: 30,
            tol_feas: None,
            max_outer: 25,
            prox_weight: 1e-3,
            theta_max: 100.0,
            surrogate_restart: true,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.q0.iter().all(|&q| q > 0.0)
            && self.rho_bar > 0.0
            && self.tol_inner > 0.0
            && self.tol_feas.map_or(true, |t| t > 0.0)
            && self.prox_weight >= 0.0
            && self.theta_max > 0.0;
        if positive {
            Ok(())
        } else {
            Err(Error::Config("trainer tolerances and weights must be positive".into()))
        }
    }

    pub fn feasibility_tol(&self, n: usize) -> f64 {
        self.tol_feas.unwrap_or(1e-5 * (1.0 + n as f64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrainingStatus {
    Converged,
    NotConverged,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingReport {
    pub status: TrainingStatus,
    /// Decision loss of the returned `theta`'s iterate.
    pub best_loss: f64,
    /// Outer iteration that produced the returned `theta` (0 is the start point).
    pub best_outer: usize,
    pub outer_iterations: usize,
    pub sweeps: usize,
    pub loss_trace: Vec<f64>,
    pub residual_trace: Vec<[f64; 3]>,
    pub q_trace: Vec<[f64; 3]>,
    pub objective_trace: Vec<f64>,
    pub wall_time_s: f64,
}

/// Penalty-based block coordinate descent.
///
/// Starts from `theta = 0` with each `x_i` and `d_i` taken from the LP
/// relaxation (cut multipliers zero). Each outer iteration runs sweeps over
/// the `theta`, `x` and `d` blocks until the relative decrease of `F` drops
/// below `tol_inner`, then raises `q` by `rho_bar` times the residuals. The
/// returned `theta` is the lowest-loss one among iterates whose largest
/// residual is below the feasibility tolerance.
pub fn train(problem: &TrainingProblem, cfg: &TrainerConfig, exec: Execution) -> Result<(Theta, TrainingReport)> {
    cfg.validate()?;
    if problem.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let start = Instant::now();
    let tol_feas = cfg.feasibility_tol(problem.len());
    let theta0 = Theta::zeros(&problem.spec, cfg.theta_max);
    let mut iter = TrainerIterate::at_surrogate_optimum(theta0, problem, exec)?;
    let mut penalty = PenaltyState::new(cfg.q0, cfg.rho_bar);

    let mut report = TrainingReport {
        status: TrainingStatus::NotConverged,
        best_loss: f64::INFINITY,
        best_outer: 0,
        outer_iterations: 0,
        sweeps: 0,
        loss_trace: vec![iter.loss],
        residual_trace: vec![iter.residuals],
        q_trace: vec![penalty.q],
        objective_trace: vec![],
        wall_time_s: 0.0,
    };
    let mut best: Option<Theta> = None;
    let feasible = |r: &[f64; 3]| r.iter().all(|&v| v < tol_feas);
    let consider = |it: &TrainerIterate, outer: usize, best: &mut Option<Theta>, report: &mut TrainingReport| {
        if feasible(&it.residuals) && it.loss < report.best_loss {
            report.best_loss = it.loss;
            report.best_outer = outer;
            *best = Some(it.theta.clone());
        }
    };
    consider(&iter, 0, &mut best, &mut report);
    let nothing_to_learn = iter.theta.is_empty();

    for outer in 1..=cfg.max_outer {
        if nothing_to_learn || iter.loss == 0.0 && feasible(&iter.residuals) {
            report.status = if feasible(&iter.residuals) {
                TrainingStatus::Converged
            } else {
                TrainingStatus::NotConverged
            };
            break;
        }
        let q = penalty.q;
        let mut f = penalty_objective(&iter, problem, &q);
        for _ in 0..cfg.max_inner {
            iter.theta = bcd_step_theta(&iter, problem, &q, cfg.prox_weight)?;
            iter.x_tilde = bcd_step_x(&iter, problem, &q, cfg.prox_weight, exec)?;
            iter.duals = bcd_step_duals(&iter, problem, &q, cfg.prox_weight, exec)?;
            iter.refresh(problem);
            let mut f_new = penalty_objective(&iter, problem, &q);
            if cfg.surrogate_restart {
                let candidate = TrainerIterate::at_surrogate_optimum(iter.theta.clone(), problem, exec)?;
                consider(&candidate, outer, &mut best, &mut report);
                let f_cand = penalty_objective(&candidate, problem, &q);
                if f_cand < f_new {
                    iter = candidate;
                    f_new = f_cand;
                }
            }
            report.sweeps += 1;
            report.objective_trace.push(f_new);
            let done = f - f_new <= cfg.tol_inner * f.abs().max(1.0);
            f = f_new;
            if done {
                break;
            }
        }
        report.outer_iterations = outer;
        report.loss_trace.push(iter.loss);
        report.residual_trace.push(iter.residuals);
        log::info!(
            "outer {outer}: loss {:.6} residuals {:?} q {:?}",
            iter.loss,
            iter.residuals,
            penalty.q
        );
        consider(&iter, outer, &mut best, &mut report);
        if feasible(&iter.residuals) {
            report.status = TrainingStatus::Converged;
            break;
        }
        penalty.update(iter.residuals);
        report.q_trace.push(penalty.q);
    }
    if nothing_to_learn {
        report.status = TrainingStatus::Converged;
    }

    report.wall_time_s = start.elapsed().as_secs_f64();
    let theta = match best {
        Some(t) => t,
        None => {
            report.status = TrainingStatus::NotConverged;
            report.best_loss = iter.loss;
            report.best_outer = report.outer_iterations;
            iter.theta
        }
    };
    Ok((theta, report))
}

#[cfg(test)]
mod tests;
