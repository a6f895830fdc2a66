//! Hybrid vehicle energy management over a horizon of `T` periods.
//!
//! Battery power is substituted out through the charge balance, leaving the
//! variables `[E_0..E_T, P_0..P_{T-1}, z_0..z_{T-1}]` with `P` the engine power
//! and `z` the integer engine level in `0..=S`. Rows, in order:
//!
//! ```text
//!   E_0 = E_init                                   1
//!   E_t <= E_max                  t = 0..T         T + 1
//!   -P_t <= 0                                      T
//!   P_t - (P_max / S) z_t <= 0                     T
//!   (E_{t+1} - E_t) / tau - P_t <= -D_t            T
//! ```
//!
//! The cost `sum alpha_t P_t + beta z_t + eta (E_max - E_T)` keeps the constant
//! `eta E_max` as the objective offset.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ConcreteMILP, LinearProgram, Row, SurrogateSpec, VarBounds};

pub const TAU: f64 = 5.0;
pub const P_MAX: f64 = 1.0;
pub const E_MAX: f64 = 100.0;
pub const DEMAND_RANGE: (f64, f64) = (0.2, 1.4);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridFamily {
    pub horizon: usize,
    pub levels: u32,
    pub eta: f64,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub e_init: f64,
    pub tau: f64,
    pub p_max: f64,
    pub e_max: f64,
}

impl HybridFamily {
    /// Draw vehicle attributes. `levels` of `None` draws `S` uniformly from {1, 2, 3}.
    pub fn sample(horizon: usize, levels: Option<u32>, rng: &mut ChaCha8Rng) -> Self {
        let eta = rng.gen_range(2.5..=5.5);
        let alpha = (0..horizon).map(|_| rng.gen_range(6.0..=16.0)).collect();
        let beta = rng.gen_range(0.5..=2.0);
        let e_init = rng.gen_range(90.0..=97.0);
        let drawn = rng.gen_range(1..=3u32);
        HybridFamily {
            horizon,
            levels: levels.unwrap_or(drawn),
            eta,
            alpha,
            beta,
            e_init,
            tau: TAU,
            p_max: P_MAX,
            e_max: E_MAX,
        }
    }

    pub fn n_vars(&self) -> usize {
        3 * self.horizon + 1
    }

    pub fn e_index(&self, t: usize) -> usize {
        t
    }

    pub fn p_index(&self, t: usize) -> usize {
        self.horizon + 1 + t
    }

    pub fn z_index(&self, t: usize) -> usize {
        2 * self.horizon + 1 + t
    }

    pub fn instantiate(&self, demand: &[f64]) -> ConcreteMILP {
        let t_len = self.horizon;
        if demand
            .iter()
            .any(|&d| d < DEMAND_RANGE.0 || d > DEMAND_RANGE.1)
        {
            log::warn!("hybrid demand outside the sampling range {DEMAND_RANGE:?}");
        }
        let n = self.n_vars();
        let mut cost = vec![0.0; n];
        for t in 0..t_len {
            cost[self.p_index(t)] = self.alpha[t];
            cost[self.z_index(t)] = self.beta;
        }
        cost[self.e_index(t_len)] = -self.eta;

        let mut rows = Vec::with_capacity(4 * t_len + 2);
        rows.push(Row::eq(vec![(self.e_index(0), 1.0)], self.e_init));
        for t in 0..=t_len {
            rows.push(Row::le(vec![(self.e_index(t), 1.0)], self.e_max));
        }
        for t in 0..t_len {
            rows.push(Row::le(vec![(self.p_index(t), -1.0)], 0.0));
        }
        let step = self.p_max / self.levels as f64;
        for t in 0..t_len {
            rows.push(Row::le(vec![(self.p_index(t), 1.0), (self.z_index(t), -step)], 0.0));
        }
        for t in 0..t_len {
            rows.push(Row::le(
                vec![
                    (self.e_index(t + 1), 1.0 / self.tau),
                    (self.e_index(t), -1.0 / self.tau),
                    (self.p_index(t), -1.0),
                ],
                -demand[t],
            ));
        }

        let mut bounds = vec![VarBounds::NONNEG; t_len + 1];
        bounds.extend(std::iter::repeat(VarBounds::FREE).take(t_len));
        bounds.extend(std::iter::repeat(VarBounds::new(0.0, self.levels as f64)).take(t_len));
        let mut integrality = vec![false; 2 * t_len + 1];
        integrality.extend(std::iter::repeat(true).take(t_len));
        let mut lp = LinearProgram::new(cost, rows, bounds);
        lp.objective_offset = self.eta * self.e_max;
        ConcreteMILP {
            lp,
            integrality,
            input: demand.to_vec(),
        }
    }

    /// Largest shortfall of the battery when the engine runs flat out: negative
    /// means some prefix of the demand drains the battery below zero.
    pub fn worst_prefix_charge(&self, demand: &[f64]) -> f64 {
        let mut e = self.e_init;
        let mut worst = e;
        for &d in demand {
            e = (e - self.tau * (d - self.p_max)).min(self.e_max);
            worst = worst.min(e);
        }
        worst
    }

    /// Demand profiles drawn uniformly per period; a profile the engine and
    /// battery cannot cover is scaled down until it can.
    pub fn sample_demand(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut d: Vec<f64> = (0..self.horizon)
            .map(|_| rng.gen_range(DEMAND_RANGE.0..=DEMAND_RANGE.1))
            .collect();
        while self.worst_prefix_charge(&d) < 0.0 {
            d.iter_mut().for_each(|v| *v *= 0.95);
        }
        d
    }

    /// `2T` cuts over every variable with cubic univariate features in `D`.
    pub fn default_spec(&self) -> SurrogateSpec {
        SurrogateSpec::dense(2 * self.horizon, self.n_vars(), self.horizon, 3)
    }
}
