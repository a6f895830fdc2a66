//! Branch and bound over the LP kernel, plus l1 feasibility restoration.
//!
//! Node selection is best bound with depth-first tie-break. Branching picks the
//! most fractional integer variable, lowest index on ties. The only heuristic
//! is rounding the root relaxation once for an initial incumbent.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpStatus, DEFAULT_TOL};
use crate::model::{ConcreteMILP, LinearProgram, Row, VarBounds};

pub const INT_TOL: f64 = 1e-6;
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MilpStatus {
    Optimal,
    GapReached,
    TargetReached,
    TimeLimit,
    Infeasible,
}

impl MilpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            MilpStatus::Optimal => "OPTIMAL",
            MilpStatus::GapReached => "GAP_REACHED",
            MilpStatus::TargetReached => "TARGET_REACHED",
            MilpStatus::TimeLimit => "TIME_LIMIT",
            MilpStatus::Infeasible => "INFEASIBLE",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Branching {
    MostFractional,
    /// First fractional variable in this order; used to cross-check labels.
    Priority(Vec<usize>),
}

#[derive(Clone, Debug)]
pub struct MilpOptions {
    pub gap_limit: f64,
    pub time_limit_s: f64,
    /// Stop at the first incumbent with objective at or below this value.
    pub target: Option<f64>,
    pub branching: Branching,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            gap_limit: 0.0,
            time_limit_s: 3600.0,
            target: None,
            branching: Branching::MostFractional,
        }
    }
}

impl MilpOptions {
    pub fn with_gap(gap_limit: f64) -> Self {
        MilpOptions {
            gap_limit,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Absent when no incumbent was found.
    pub x: Option<Vec<f64>>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time: f64,
    /// Global lower bound after each processed node.
    pub bound_trace: Vec<f64>,
}

pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    if objective.is_finite() && bound.is_finite() {
        (objective - bound) / objective.abs().max(1.0)
    } else {
        f64::INFINITY
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    bounds: Vec<VarBounds>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap pops the greatest: lowest bound, then deepest, then newest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(self.seq.cmp(&other.seq))
    }
}

fn pick_branch(milp: &ConcreteMILP, x: &[f64], rule: &Branching) -> Option<usize> {
    let frac = |j: usize| (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
    match rule {
        Branching::MostFractional => {
            let mut best: Option<(usize, f64)> = None;
            for j in milp.integer_indices() {
                let f = frac(j);
                if f > INT_TOL && best.map_or(true, |(_, bf)| f > bf) {
                    best = Some((j, f));
                }
            }
            best.map(|b| b.0)
        }
        Branching::Priority(order) => order
            .iter()
            .copied()
            .filter(|&j| milp.integrality[j])
            .chain(milp.integer_indices())
            .find(|&j| frac(j) > INT_TOL),
    }
}

/// Round the integer block, then complete the continuous block by LP.
fn complete_rounding(milp: &ConcreteMILP, x: &[f64], bounds: &[VarBounds]) -> Result<Option<Vec<f64>>> {
    let mut lp = milp.lp.clone();
    lp.bounds = bounds.to_vec();
    let mut z = x.to_vec();
    for j in milp.integer_indices() {
        let r = x[j].round().clamp(lp.bounds[j].lo, lp.bounds[j].hi);
        z[j] = r;
        lp.bounds[j] = VarBounds::fixed(r);
    }
    if milp.continuous_indices().is_empty() {
        return Ok((milp.lp.max_violation(&z) <= FEAS_TOL).then_some(z));
    }
    let sol = solve_lp(&lp, DEFAULT_TOL)?;
    if !sol.is_optimal() {
        return Ok(None);
    }
    let mut out = sol.x;
    snap_integers(milp, &mut out);
    Ok((milp.lp.max_violation(&out) <= FEAS_TOL).then_some(out))
}

fn snap_integers(milp: &ConcreteMILP, x: &mut [f64]) {
    for j in milp.integer_indices() {
        x[j] = x[j].round();
    }
}

pub fn solve_milp(milp: &ConcreteMILP, opts: &MilpOptions) -> Result<MilpSolution> {
    milp.lp.validate()?;
    if !(opts.gap_limit >= 0.0) || !(opts.time_limit_s > 0.0) {
        return Err(Error::Config(format!(
            "gap_limit must be >= 0 and time_limit > 0 (got {}, {})",
            opts.gap_limit, opts.time_limit_s
        )));
    }
    let start = Instant::now();
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let mut nodes = 0usize;
    let mut global_bound = f64::NEG_INFINITY;
    let mut bound_trace = Vec::new();
    let mut status = None;

    let meets_target = |obj: f64| {
        opts.target
            .map_or(false, |t| obj <= t + 1e-6 * t.abs().max(1.0))
    };
    let prune_margin = |inc: f64| (opts.gap_limit.max(1e-9)) * inc.abs().max(1.0);

    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq,
        bounds: milp.lp.bounds.clone(),
    });

    // Lowest objective among nodes dropped only because of the gap margin.
    let mut discarded = f64::INFINITY;
    macro_rules! update_bound {
        () => {{
            let inc = incumbent.as_ref().map_or(f64::INFINITY, |i| i.0);
            let candidate = open_min(&heap).min(discarded).min(inc);
            global_bound = global_bound.max(candidate);
            bound_trace.push(global_bound);
        }};
    }

    let mut lp: LinearProgram = milp.lp.clone();
    while let Some(node) = heap.pop() {
        if start.elapsed().as_secs_f64() > opts.time_limit_s {
            heap.push(node);
            status = Some(MilpStatus::TimeLimit);
            break;
        }
        if let Some((inc, _)) = &incumbent {
            if node.bound >= inc - prune_margin(*inc) {
                if node.bound < *inc {
                    discarded = discarded.min(node.bound);
                }
                continue;
            }
        }
        nodes += 1;
        lp.bounds.clone_from(&node.bounds);
        let sol = solve_lp(&lp, DEFAULT_TOL)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                update_bound!();
                continue;
            }
            LpStatus::Unbounded => {
                return Err(Error::Internal("MILP relaxation is unbounded".into()));
            }
        }
        let obj = sol.objective;

        if nodes == 1 && incumbent.is_none() {
            if let Some(x) = complete_rounding(milp, &sol.x, &node.bounds)? {
                let o = milp.lp.objective(&x);
                incumbent = Some((o, x));
            }
        }

        let pruned = incumbent
            .as_ref()
            .map_or(false, |(inc, _)| obj >= inc - prune_margin(*inc));
        if pruned {
            let inc = incumbent.as_ref().map_or(f64::INFINITY, |i| i.0);
            if obj < inc {
                discarded = discarded.min(obj);
            }
        } else {
            match pick_branch(milp, &sol.x, &opts.branching) {
                None => {
                    let mut x = sol.x;
                    snap_integers(milp, &mut x);
                    let o = milp.lp.objective(&x);
                    if incumbent.as_ref().map_or(true, |(inc, _)| o < *inc) {
                        incumbent = Some((o, x));
                    }
                }
                Some(j) => {
                    let v = sol.x[j];
                    let mut down = node.bounds.clone();
                    down[j].hi = v.floor();
                    let mut up = node.bounds;
                    up[j].lo = v.ceil();
                    for b in [up, down] {
                        seq += 1;
                        heap.push(Node {
                            bound: obj,
                            depth: node.depth + 1,
                            seq,
                            bounds: b,
                        });
                    }
                }
            }
        }
        update_bound!();

        if let Some((inc, _)) = &incumbent {
            if meets_target(*inc) {
                status = Some(MilpStatus::TargetReached);
                break;
            }
            if relative_gap(*inc, global_bound) <= opts.gap_limit + 1e-9 {
                break;
            }
        }
    }

    let wall_time = start.elapsed().as_secs_f64();
    let (objective, x) = match incumbent {
        Some((o, x)) => (o, Some(x)),
        None => (f64::INFINITY, None),
    };
    let gap = relative_gap(objective, global_bound);
    let status = match status {
        Some(s) => s,
        None if x.is_none() => MilpStatus::Infeasible,
        None if gap <= 1e-9 || heap.is_empty() => MilpStatus::Optimal,
        None => MilpStatus::GapReached,
    };
    let gap = if status == MilpStatus::Optimal { gap.max(0.0) } else { gap };
    Ok(MilpSolution {
        status,
        x,
        objective,
        bound: global_bound,
        gap,
        nodes,
        wall_time,
        bound_trace,
    })
}

fn open_min(heap: &BinaryHeap<Node>) -> f64 {
    heap.peek().map_or(f64::INFINITY, |n| n.bound)
}

/// Project `x_pred` onto the integer-feasible set: l1-nearest integer block
/// first, then the continuous block re-optimized with the original cost.
///
/// Componentwise rounding minimizes every term of the l1 distance at once, so
/// when the rounded block admits a completion it is the projection and the
/// projection MILP is skipped.
pub fn restore_feasibility(milp: &ConcreteMILP, x_pred: &[f64]) -> Result<Vec<f64>> {
    let n = milp.n_vars();
    if x_pred.len() != n {
        return Err(Error::InputShape {
            expected: n,
            got: x_pred.len(),
        });
    }
    let ints = milp.integer_indices();
    let rounded: Vec<f64> = ints
        .iter()
        .map(|&j| x_pred[j].round().clamp(milp.lp.bounds[j].lo, milp.lp.bounds[j].hi))
        .collect();
    if let Some(x) = complete_block(milp, &ints, &rounded)? {
        return Ok(x);
    }

    // Variables: x (n), then one deviation e_k per integer variable.
    let m = ints.len();
    let mut cost = vec![0.0; n + m];
    cost[n..].iter_mut().for_each(|c| *c = 1.0);
    let mut rows = milp.lp.rows.clone();
    for (k, &j) in ints.iter().enumerate() {
        rows.push(Row::le(vec![(j, 1.0), (n + k, -1.0)], x_pred[j]));
        rows.push(Row::le(vec![(j, -1.0), (n + k, -1.0)], -x_pred[j]));
    }
    let mut bounds = milp.lp.bounds.clone();
    bounds.extend(std::iter::repeat(VarBounds::NONNEG).take(m));
    let mut integrality = milp.integrality.clone();
    integrality.extend(std::iter::repeat(false).take(m));
    let projection = ConcreteMILP {
        lp: LinearProgram::new(cost, rows, bounds),
        integrality,
        input: milp.input.clone(),
    };
    let sol = solve_milp(&projection, &MilpOptions::default())?;
    let z: Vec<f64> = match sol.x {
        Some(x) if sol.status == MilpStatus::Optimal => ints.iter().map(|&j| x[j].round()).collect(),
        _ if sol.status == MilpStatus::Infeasible => return Err(Error::RestorationInfeasible),
        _ => {
            return Err(Error::Internal(format!(
                "restoration projection ended with status {}",
                sol.status.as_str()
            )))
        }
    };
    complete_block(milp, &ints, &z)?.ok_or_else(|| Error::Internal("continuous completion after projection failed".into()))
}

/// Fix the integer block to `z` and optimize the rest; `None` if infeasible.
fn complete_block(milp: &ConcreteMILP, ints: &[usize], z: &[f64]) -> Result<Option<Vec<f64>>> {
    let n = milp.n_vars();
    let mut x = if ints.len() == n {
        let mut x = vec![0.0; n];
        for (&j, &v) in ints.iter().zip(z) {
            x[j] = v;
        }
        if milp.lp.max_violation(&x) > FEAS_TOL {
            return Ok(None);
        }
        x
    } else {
        let mut lp = milp.lp.clone();
        for (&j, &v) in ints.iter().zip(z) {
            lp.bounds[j] = VarBounds::fixed(v);
        }
        let sol = solve_lp(&lp, DEFAULT_TOL)?;
        if !sol.is_optimal() {
            return Ok(None);
        }
        sol.x
    };
    for (&j, &v) in ints.iter().zip(z) {
        x[j] = v;
    }
    Ok(Some(x))
}
