//! Single-stage batch scheduling on parallel units with time slots.
//!
//! Variables are `[S_ij (I*J), T_jt (J*|T|), X_ijt (I*J*|T|)]`, all row-major.
//! The input is `u = (rho_1..rho_I, eps_1..eps_I, tau_11..tau_IJ)`. The end time
//! of the slot before the first one is the constant 0. Rows, in order:
//!
//! ```text
//!   T_{j,t-1} - T_jt <= 0                                    J|T|
//!   sum_jt X_ijt = 1                                         I
//!   sum_i X_ijt <= 1                                         J|T|
//!   S_ij - M sum_t X_ijt <= 0                                IJ
//!   T_{j,t-1} - S_ij + eta X_ijt <= eta                      IJ|T|
//!   S_ij - T_jt + eta X_ijt <= eta - tau_ij                  IJ|T|
//!   -sum_j S_ij <= -rho_i                                    I
//!   sum_j S_ij + sum_jt tau_ij X_ijt <= eps_i                I
//! ```

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lp::{solve_lp, DEFAULT_TOL};
use crate::model::{ConcreteMILP, CutPattern, FeatureMap, LinearProgram, Row, SurrogateSpec, VarBounds};

pub const HORIZON: f64 = 40.0;
pub const TAU_RANGE: (f64, f64) = (1.0, 7.0);
pub const RHO_RANGE: (f64, f64) = (1.0, 9.0);
pub const EPS_RANGE: (f64, f64) = (10.0, 39.0);
pub const GAMMA_RANGE: (f64, f64) = (30.0, 100.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulingFamily {
    pub batches: usize,
    pub units: usize,
    pub slots: usize,
    pub horizon: f64,
    /// Processing cost per (batch, unit), row-major.
    pub gamma: Vec<f64>,
}

impl SchedulingFamily {
    pub fn sample(batches: usize, units: usize, slots: usize, rng: &mut ChaCha8Rng) -> Self {
        let gamma = (0..batches * units)
            .map(|_| rng.gen_range(GAMMA_RANGE.0..=GAMMA_RANGE.1))
            .collect();
        SchedulingFamily {
            batches,
            units,
            slots,
            horizon: HORIZON,
            gamma,
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.batches + self.batches * self.units
    }

    pub fn n_vars(&self) -> usize {
        let (i, j, t) = (self.batches, self.units, self.slots);
        i * j + j * t + i * j * t
    }

    pub fn s_index(&self, i: usize, j: usize) -> usize {
        i * self.units + j
    }

    pub fn t_index(&self, j: usize, t: usize) -> usize {
        self.batches * self.units + j * self.slots + t
    }

    pub fn x_index(&self, i: usize, j: usize, t: usize) -> usize {
        self.batches * self.units + self.units * self.slots + (i * self.units + j) * self.slots + t
    }

    fn split<'a>(&self, u: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let ni = self.batches;
        (&u[..ni], &u[ni..2 * ni], &u[2 * ni..])
    }

    pub fn instantiate(&self, u: &[f64]) -> ConcreteMILP {
        let (ni, nj, nt) = (self.batches, self.units, self.slots);
        let (rho, eps, tau) = self.split(u);
        let outside = |v: f64, r: (f64, f64)| v < r.0 || v > r.1;
        if rho.iter().any(|&v| outside(v, RHO_RANGE))
            || eps.iter().any(|&v| outside(v, EPS_RANGE))
            || tau.iter().any(|&v| outside(v, TAU_RANGE))
        {
            log::warn!("scheduling input outside the sampling ranges");
        }
        let big_m = eps.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let eta = self.horizon;
        let n = self.n_vars();

        let mut cost = vec![0.0; n];
        for i in 0..ni {
            for j in 0..nj {
                for t in 0..nt {
                    cost[self.x_index(i, j, t)] = self.gamma[i * nj + j];
                }
            }
        }

        let prev_end = |j: usize, t: usize| -> Option<usize> { (t > 0).then(|| self.t_index(j, t - 1)) };
        let mut rows = Vec::new();
        for j in 0..nj {
            for t in 0..nt {
                let mut c = vec![(self.t_index(j, t), -1.0)];
                if let Some(p) = prev_end(j, t) {
                    c.push((p, 1.0));
                }
                rows.push(Row::le(c, 0.0));
            }
        }
        for i in 0..ni {
            let c = (0..nj)
                .flat_map(|j| (0..nt).map(move |t| (j, t)))
                .map(|(j, t)| (self.x_index(i, j, t), 1.0))
                .collect();
            rows.push(Row::eq(c, 1.0));
        }
        for j in 0..nj {
            for t in 0..nt {
                let c = (0..ni).map(|i| (self.x_index(i, j, t), 1.0)).collect();
                rows.push(Row::le(c, 1.0));
            }
        }
        for i in 0..ni {
            for j in 0..nj {
                let mut c = vec![(self.s_index(i, j), 1.0)];
                c.extend((0..nt).map(|t| (self.x_index(i, j, t), -big_m)));
                rows.push(Row::le(c, 0.0));
            }
        }
        for i in 0..ni {
            for j in 0..nj {
                for t in 0..nt {
                    let mut c = vec![(self.s_index(i, j), -1.0), (self.x_index(i, j, t), eta)];
                    if let Some(p) = prev_end(j, t) {
                        c.push((p, 1.0));
                    }
                    rows.push(Row::le(c, eta));
                }
            }
        }
        for i in 0..ni {
            for j in 0..nj {
                for t in 0..nt {
                    let c = vec![
                        (self.s_index(i, j), 1.0),
                        (self.t_index(j, t), -1.0),
                        (self.x_index(i, j, t), eta),
                    ];
                    rows.push(Row::le(c, eta - tau[i * nj + j]));
                }
            }
        }
        for i in 0..ni {
            let c = (0..nj).map(|j| (self.s_index(i, j), -1.0)).collect();
            rows.push(Row::le(c, -rho[i]));
        }
        for i in 0..ni {
            let mut c: Vec<(usize, f64)> = (0..nj).map(|j| (self.s_index(i, j), 1.0)).collect();
            for j in 0..nj {
                for t in 0..nt {
                    c.push((self.x_index(i, j, t), tau[i * nj + j]));
                }
            }
            rows.push(Row::le(c, eps[i]));
        }

        let n_cont = ni * nj + nj * nt;
        let mut bounds = vec![VarBounds::NONNEG; n_cont];
        bounds.extend(std::iter::repeat(VarBounds::new(0.0, 1.0)).take(n - n_cont));
        let mut integrality = vec![false; n_cont];
        integrality.extend(std::iter::repeat(true).take(n - n_cont));
        ConcreteMILP {
            lp: LinearProgram::new(cost, rows, bounds),
            integrality,
            input: u.to_vec(),
        }
    }

    /// Draw `(rho, eps, tau)` with `eps_i >= rho_i + min_j tau_ij`, redrawing a
    /// batch until that holds.
    pub fn draw_input(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (ni, nj) = (self.batches, self.units);
        let mut rho = vec![0.0; ni];
        let mut eps = vec![0.0; ni];
        let mut tau = vec![0.0; ni * nj];
        for i in 0..ni {
            loop {
                let r = rng.gen_range(RHO_RANGE.0..=RHO_RANGE.1);
                let e = rng.gen_range(EPS_RANGE.0..=EPS_RANGE.1);
                let row: Vec<f64> = (0..nj)
                    .map(|_| rng.gen_range(TAU_RANGE.0..=TAU_RANGE.1))
                    .collect();
                let min_tau = row.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                if e >= r + min_tau {
                    rho[i] = r;
                    eps[i] = e;
                    tau[i * nj..(i + 1) * nj].copy_from_slice(&row);
                    break;
                }
            }
        }
        let mut u = rho;
        u.extend(eps);
        u.extend(tau);
        u
    }

    /// True when the LP relaxation of the instance at `u` is feasible.
    pub fn relaxation_feasible(&self, u: &[f64]) -> Result<bool> {
        let milp = self.instantiate(u);
        Ok(solve_lp(&milp.lp, DEFAULT_TOL)?.is_optimal())
    }

    /// One cut per batch over that batch's start times and assignment
    /// binaries, quadratic in the batch's own release, due and processing times.
    pub fn default_spec(&self) -> SurrogateSpec {
        let (ni, nj, nt) = (self.batches, self.units, self.slots);
        let cuts = (0..ni)
            .map(|i| {
                let mut vars: Vec<usize> = (0..nj).map(|j| self.s_index(i, j)).collect();
                for j in 0..nj {
                    for t in 0..nt {
                        vars.push(self.x_index(i, j, t));
                    }
                }
                let mut inputs = vec![i, ni + i];
                inputs.extend((0..nj).map(|j| 2 * ni + i * nj + j));
                CutPattern { vars, inputs }
            })
            .collect();
        SurrogateSpec {
            input_dim: self.input_dim(),
            cuts,
            feature_map: FeatureMap::univariate(2 + nj, 2),
            rhs_mode: Default::default(),
        }
    }
}
