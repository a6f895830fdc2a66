//! Exact LP kernel: primal solution plus row duals and reduced costs.

mod simplex;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::LinearProgram;

pub use simplex::DenseSimplex;

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Multipliers `y >= 0` on `<=` rows so that `cost + A^T y` equals `reduced_costs`.
    pub row_duals: Vec<f64>,
    /// `cost_j + sum_r y_r a_rj`: nonnegative at a lower bound, nonpositive at an upper bound.
    pub reduced_costs: Vec<f64>,
    /// Includes the program's objective offset.
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Dual objective `-y . b + sum_j rc_j x_j` with `x_j` the bound each reduced cost is paid at.
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        let yb: f64 = self
            .row_duals
            .iter()
            .zip(&lp.rows)
            .map(|(y, r)| y * r.rhs)
            .sum();
        let bound_part: f64 = self
            .reduced_costs
            .iter()
            .zip(&lp.bounds)
            .map(|(&d, b)| {
                // Round-off on free or basic columns must not meet an infinite bound.
                if d.abs() <= 1e-9 {
                    0.0
                } else if d > 0.0 {
                    d * b.lo
                } else if d < 0.0 {
                    d * b.hi
                } else {
                    0.0
                }
            })
            .sum();
        -yb + bound_part + lp.objective_offset
    }
}

/// Backend seam so an external solver can replace the bundled simplex.
pub trait LpBackend: Sync {
    fn solve(&self, lp: &LinearProgram, tol: f64) -> Result<LpSolution>;
}

pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpSolution> {
    DenseSimplex::default().solve(lp, tol)
}

#[cfg(test)]
mod tests;
