//! Bounded-variable revised primal simplex with an explicit dense basis inverse.
//!
//! Rows become `a.x + s = b` with slack bounds `[0, inf)` for `<=` and `[0, 0]`
//! for `=`. Variable bounds are handled implicitly. The starting basis takes
//! each row's slack, or failing that a column whose only nonzero is in that
//! row; phase 1 minimizes the sum of artificials on the remaining rows.
//! Pricing is Dantzig's rule; after a run of degenerate pivots the solver
//! switches to Bland's rule until it makes progress again.

use super::{LpBackend, LpSolution, LpStatus};
use crate::error::{Error, Result};
use crate::model::{LinearProgram, Sense};

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct DenseSimplex {
    /// `None` picks a cap from the problem size.
    pub max_iterations: Option<usize>,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex {
            max_iterations: None,
            bland_after: 50,
        }
    }
}

impl LpBackend for DenseSimplex {
    fn solve(&self, lp: &LinearProgram, tol: f64) -> Result<LpSolution> {
        lp.validate()?;
        let mut engine = match Engine::new(lp) {
            Some(e) => e,
            None => return Ok(trivial_infeasible(lp)),
        };
        engine.max_iterations = self
            .max_iterations
            .unwrap_or(50_000 + 20 * (engine.m + engine.ncols));
        engine.bland_after = self.bland_after;
        engine.solve(lp, tol)
    }
}

fn trivial_infeasible(lp: &LinearProgram) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        x: vec![0.0; lp.n_vars],
        row_duals: vec![0.0; lp.rows.len()],
        reduced_costs: vec![0.0; lp.n_vars],
        objective: f64::NAN,
        iterations: 0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum VarState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable resting at zero.
    Zero,
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Engine {
    m: usize,
    n: usize,
    ncols: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    /// Column-major: `binv[c * m + i]` is entry (i, c) of the basis inverse.
    binv: Vec<f64>,
    rhs: Vec<f64>,
    first_artificial: usize,
    iterations: usize,
    max_iterations: usize,
    bland_after: usize,
    since_refactor: usize,
    refactor_every: usize,
}

impl Engine {
    fn new(lp: &LinearProgram) -> Option<Engine> {
        let n = lp.n_vars;
        let m = lp.rows.len();

        let mut counts = vec![0usize; n];
        for row in &lp.rows {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    counts[j] += 1;
                }
            }
        }
        let mut col_start = Vec::with_capacity(n + 2 * m + 1);
        col_start.push(0);
        for c in &counts {
            col_start.push(col_start.last().unwrap() + c);
        }
        let nnz = *col_start.last().unwrap();
        let mut col_row = vec![0usize; nnz];
        let mut col_val = vec![0.0; nnz];
        let mut fill = col_start[..n].to_vec();
        for (r, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    col_row[fill[j]] = r;
                    col_val[fill[j]] = a;
                    fill[j] += 1;
                }
            }
        }
        // Duplicate indices within a row are summed by construction of the dot products.

        let mut lo: Vec<f64> = lp.bounds.iter().map(|b| b.lo).collect();
        let mut hi: Vec<f64> = lp.bounds.iter().map(|b| b.hi).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return None;
        }
        let mut x = vec![0.0; n];
        let mut state = vec![VarState::Zero; n];
        for j in 0..n {
            if lo[j].is_finite() {
                x[j] = lo[j];
                state[j] = VarState::Lower;
            } else if hi[j].is_finite() {
                x[j] = hi[j];
                state[j] = VarState::Upper;
            }
        }

        // Slack columns n..n+m.
        for (r, row) in lp.rows.iter().enumerate() {
            col_row.push(r);
            col_val.push(1.0);
            col_start.push(col_row.len());
            lo.push(0.0);
            hi.push(match row.sense {
                Sense::Le => f64::INFINITY,
                Sense::Eq => 0.0,
            });
        }
        let rhs: Vec<f64> = lp.rows.iter().map(|r| r.rhs).collect();
        let mut residual = rhs.clone();
        for j in 0..n {
            if x[j] != 0.0 {
                for p in col_start[j]..col_start[j + 1] {
                    residual[col_row[p]] -= col_val[p] * x[j];
                }
            }
        }

        let mut basis = vec![0usize; m];
        let mut binv = vec![0.0; m * m];
        x.resize(n + m, 0.0);
        state.resize(n + m, VarState::Lower);
        let first_artificial = n + m;
        // Structural columns with a single nonzero can start basic in place of
        // an artificial when the slack cannot absorb the row residual.
        let mut singleton: Vec<Vec<usize>> = vec![Vec::new(); m];
        for j in 0..n {
            if col_start[j + 1] - col_start[j] == 1 && lo[j] < hi[j] {
                singleton[col_row[col_start[j]]].push(j);
            }
        }
        for r in 0..m {
            let slack = n + r;
            let s = residual[r];
            let crash = singleton[r].iter().copied().find(|&j| {
                let v = x[j] + s / col_val[col_start[j]];
                v >= lo[j] && v <= hi[j]
            });
            if s >= lo[slack] - FEAS_TOL && s <= hi[slack] + FEAS_TOL {
                x[slack] = s;
                state[slack] = VarState::Basic;
                basis[r] = slack;
                binv[r * m + r] = 1.0;
            } else if let Some(j) = crash {
                let a = col_val[col_start[j]];
                x[j] += s / a;
                state[j] = VarState::Basic;
                basis[r] = j;
                binv[r * m + r] = 1.0 / a;
                x[slack] = 0.0;
                state[slack] = VarState::Lower;
            } else {
                x[slack] = 0.0;
                state[slack] = VarState::Lower;
                let sign = if s > 0.0 { 1.0 } else { -1.0 };
                col_row.push(r);
                col_val.push(sign);
                col_start.push(col_row.len());
                lo.push(0.0);
                hi.push(f64::INFINITY);
                x.push(s.abs());
                state.push(VarState::Basic);
                basis[r] = x.len() - 1;
                binv[r * m + r] = sign;
            }
        }
        let ncols = x.len();
        Some(Engine {
            m,
            n,
            ncols,
            col_start,
            col_row,
            col_val,
            lo,
            hi,
            x,
            state,
            basis,
            binv,
            rhs,
            first_artificial,
            iterations: 0,
            max_iterations: 0,
            bland_after: 50,
            since_refactor: 0,
            refactor_every: 100.max(m / 2),
        })
    }

    fn solve(&mut self, lp: &LinearProgram, tol: f64) -> Result<LpSolution> {
        if self.ncols > self.first_artificial {
            let mut phase1 = vec![0.0; self.ncols];
            for c in &mut phase1[self.first_artificial..] {
                *c = 1.0;
            }
            self.run(&phase1)?;
            let infeasibility: f64 = self.x[self.first_artificial..].iter().sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeasibility > tol.max(FEAS_TOL) * scale {
                let mut sol = trivial_infeasible(lp);
                sol.iterations = self.iterations;
                return Ok(sol);
            }
            self.retire_artificials();
        }

        let mut cost = vec![0.0; self.ncols];
        cost[..self.n].copy_from_slice(&lp.cost);
        let outcome = self.run(&cost)?;
        self.refactor()?;
        let y = self.duals(&cost);

        let x: Vec<f64> = self.x[..self.n].to_vec();
        let reduced_costs: Vec<f64> = (0..self.n).map(|j| cost[j] - self.col_dot(j, &y)).collect();
        let row_duals: Vec<f64> = y.iter().map(|v| -v).collect();
        let status = match outcome {
            Outcome::Optimal => LpStatus::Optimal,
            Outcome::Unbounded => LpStatus::Unbounded,
        };
        let objective = match status {
            LpStatus::Optimal => lp.objective(&x),
            _ => f64::NEG_INFINITY,
        };
        Ok(LpSolution {
            status,
            x,
            row_duals,
            reduced_costs,
            objective,
            iterations: self.iterations,
        })
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        (self.col_start[j]..self.col_start[j + 1])
            .map(|p| y[self.col_row[p]] * self.col_val[p])
            .sum()
    }

    /// `y = c_B^T B^{-1}`.
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let cb: Vec<(usize, f64)> = self
            .basis
            .iter()
            .enumerate()
            .filter_map(|(k, &j)| (cost[j] != 0.0).then_some((k, cost[j])))
            .collect();
        (0..m)
            .map(|i| {
                let col = &self.binv[i * m..(i + 1) * m];
                cb.iter().map(|&(k, c)| c * col[k]).sum()
            })
            .collect()
    }

    fn eligible(&self, j: usize, d: f64) -> bool {
        if self.lo[j] == self.hi[j] {
            return false;
        }
        match self.state[j] {
            VarState::Basic => false,
            VarState::Lower => d < -OPT_TOL,
            VarState::Upper => d > OPT_TOL,
            VarState::Zero => d.abs() > OPT_TOL,
        }
    }

    fn run(&mut self, cost: &[f64]) -> Result<Outcome> {
        let m = self.m;
        let mut degenerate_run = 0usize;
        let mut alpha = vec![0.0; m];
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::SolverFailure {
                    iterations: self.iterations,
                    reason: "iteration cap reached".into(),
                });
            }
            let bland = degenerate_run > self.bland_after;
            let y = self.duals(cost);

            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.ncols {
                if self.state[j] == VarState::Basic {
                    continue;
                }
                let d = cost[j] - self.col_dot(j, &y);
                if !self.eligible(j, d) {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                match entering {
                    Some((_, best)) if best.abs() >= d.abs() => {}
                    _ => entering = Some((j, d)),
                }
            }
            let Some((q, dq)) = entering else {
                return Ok(Outcome::Optimal);
            };
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };

            alpha.iter_mut().for_each(|a| *a = 0.0);
            for p in self.col_start[q]..self.col_start[q + 1] {
                let (r, a) = (self.col_row[p], self.col_val[p]);
                let col = &self.binv[r * m..(r + 1) * m];
                for (ai, bi) in alpha.iter_mut().zip(col) {
                    *ai += a * bi;
                }
            }

            let (leave, step) = self.ratio_test(q, dir, &alpha, bland);
            let step = match step {
                Some(s) => s,
                None => return Ok(Outcome::Unbounded),
            };

            if step <= DEGENERATE_STEP {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            self.x[q] += dir * step;
            for i in 0..m {
                if alpha[i] != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= dir * step * alpha[i];
                }
            }
            self.iterations += 1;

            match leave {
                None => {
                    // Bound flip of the entering variable.
                    if dir > 0.0 {
                        self.x[q] = self.hi[q];
                        self.state[q] = VarState::Upper;
                    } else {
                        self.x[q] = self.lo[q];
                        self.state[q] = VarState::Lower;
                    }
                }
                Some(r) => {
                    let l = self.basis[r];
                    let rate = -dir * alpha[r];
                    if rate < 0.0 {
                        self.x[l] = self.lo[l];
                        self.state[l] = VarState::Lower;
                    } else {
                        self.x[l] = self.hi[l];
                        self.state[l] = if self.lo[l] == self.hi[l] {
                            VarState::Lower
                        } else {
                            VarState::Upper
                        };
                    }
                    self.pivot(r, q, &alpha);
                    self.since_refactor += 1;
                    if self.since_refactor >= self.refactor_every {
                        self.refactor()?;
                    }
                }
            }
        }
    }

    /// Returns the leaving basis position (None for a bound flip) and the step
    /// length (None if the direction is unbounded).
    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], bland: bool) -> (Option<usize>, Option<f64>) {
        let range = self.hi[q] - self.lo[q];
        let limit = |i: usize, slack: f64| -> Option<f64> {
            let a = alpha[i];
            if a.abs() <= PIVOT_TOL {
                return None;
            }
            let b = self.basis[i];
            let rate = -dir * a;
            if rate < 0.0 {
                self.lo[b]
                    .is_finite()
                    .then(|| ((self.x[b] - self.lo[b] + slack) / -rate).max(0.0))
            } else {
                self.hi[b]
                    .is_finite()
                    .then(|| ((self.hi[b] - self.x[b] + slack) / rate).max(0.0))
            }
        };

        if bland {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if let Some(t) = limit(i, 0.0) {
                    let better = match best {
                        None => true,
                        Some((bi, bt)) => {
                            t < bt - DEGENERATE_STEP
                                || (t <= bt + DEGENERATE_STEP && self.basis[i] < self.basis[bi])
                        }
                    };
                    if better {
                        best = Some((i, t));
                    }
                }
            }
            return match best {
                Some((_, t)) if range.is_finite() && range <= t => (None, Some(range)),
                Some((i, t)) => (Some(i), Some(t)),
                None if range.is_finite() => (None, Some(range)),
                None => (None, None),
            };
        }

        // Harris two-pass: relaxed bound first, then the largest pivot within it.
        let mut relaxed = f64::INFINITY;
        for i in 0..self.m {
            if let Some(t) = limit(i, FEAS_TOL) {
                relaxed = relaxed.min(t);
            }
        }
        if range.is_finite() && range <= relaxed {
            return (None, Some(range));
        }
        if relaxed.is_infinite() {
            return (None, None);
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            if let Some(t) = limit(i, 0.0) {
                if t <= relaxed {
                    let better = match best {
                        None => true,
                        Some((bi, _)) => alpha[i].abs() > alpha[bi].abs(),
                    };
                    if better {
                        best = Some((i, t));
                    }
                }
            }
        }
        match best {
            Some((i, t)) => (Some(i), Some(t)),
            None => (None, None),
        }
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let pivot = alpha[r];
        for c in 0..m {
            let col = &mut self.binv[c * m..(c + 1) * m];
            let t = col[r] / pivot;
            if t == 0.0 {
                continue;
            }
            for (v, a) in col.iter_mut().zip(alpha) {
                *v -= a * t;
            }
            col[r] = t;
        }
        let old = self.basis[r];
        debug_assert!(self.state[old] != VarState::Basic);
        self.basis[r] = q;
        self.state[q] = VarState::Basic;
    }

    /// Fix artificials at zero and pivot basic ones out where some column allows it.
    fn retire_artificials(&mut self) {
        let m = self.m;
        for j in self.first_artificial..self.ncols {
            self.lo[j] = 0.0;
            self.hi[j] = 0.0;
            if self.state[j] != VarState::Basic {
                self.x[j] = 0.0;
                self.state[j] = VarState::Lower;
            }
        }
        for r in 0..m {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let rho: Vec<f64> = (0..m).map(|c| self.binv[c * m + r]).collect();
            let candidate = (0..self.first_artificial).find(|&j| {
                self.state[j] != VarState::Basic
                    && self.lo[j] != self.hi[j]
                    && self.col_dot(j, &rho).abs() > 1e-7
            });
            if let Some(q) = candidate {
                let mut alpha = vec![0.0; m];
                for p in self.col_start[q]..self.col_start[q + 1] {
                    let (row, a) = (self.col_row[p], self.col_val[p]);
                    for (i, ai) in alpha.iter_mut().enumerate() {
                        *ai += a * self.binv[row * m + i];
                    }
                }
                let art = self.basis[r];
                self.x[art] = 0.0;
                self.state[art] = VarState::Lower;
                self.pivot(r, q, &alpha);
            }
        }
    }

    /// Recompute the basis inverse from scratch and the basic values from it.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        // Row-major augmented [B | I] reduced by Gauss-Jordan with partial pivoting.
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for (k, &j) in self.basis.iter().enumerate() {
            for p in self.col_start[j]..self.col_start[j + 1] {
                aug[self.col_row[p] * w + k] = self.col_val[p];
            }
        }
        for i in 0..m {
            aug[i * w + m + i] = 1.0;
        }
        let mut nz: Vec<usize> = Vec::with_capacity(w);
        for k in 0..m {
            let mut p = k;
            let mut best = aug[k * w + k].abs();
            for i in k + 1..m {
                let v = aug[i * w + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-13 {
                return Err(Error::SolverFailure {
                    iterations: self.iterations,
                    reason: "singular basis during refactorization".into(),
                });
            }
            if p != k {
                for c in 0..w {
                    aug.swap(k * w + c, p * w + c);
                }
            }
            let inv = 1.0 / aug[k * w + k];
            nz.clear();
            for c in k..w {
                let v = &mut aug[k * w + c];
                if *v != 0.0 {
                    *v *= inv;
                    nz.push(c);
                }
            }
            let (head, rest) = aug.split_at_mut(k * w);
            let (pivot_row, tail) = rest.split_at_mut(w);
            for row in head.chunks_exact_mut(w).chain(tail.chunks_exact_mut(w)) {
                let f = row[k];
                if f != 0.0 {
                    for &c in &nz {
                        row[c] -= f * pivot_row[c];
                    }
                }
            }
        }
        // Row i of aug's right half is row i of B^{-1}: basis position i.
        for i in 0..m {
            for c in 0..m {
                self.binv[c * m + i] = aug[i * w + m + c];
            }
        }

        let mut residual = self.rhs.clone();
        for j in 0..self.ncols {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                for p in self.col_start[j]..self.col_start[j + 1] {
                    residual[self.col_row[p]] -= self.col_val[p] * self.x[j];
                }
            }
        }
        for i in 0..m {
            let mut v = 0.0;
            for (c, rc) in residual.iter().enumerate() {
                if *rc != 0.0 {
                    v += self.binv[c * m + i] * rc;
                }
            }
            let b = self.basis[i];
            self.x[b] = v;
        }
        Ok(())
    }
}
