//! Parametric MILP instances, learnable cut structure and surrogate LP assembly.
//!
//! A surrogate LP keeps every row of the original MILP, drops integrality and
//! appends `n_cuts` parametric inequalities whose coefficients are polynomials
//! of the model input `u`:
//!
//! ```text
//!   coeff(v, j; u) = sum_k theta[v][j][k] * phi_k(u)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
}

/// One linear row `coeffs . x (<= | =) rhs` with sparse coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub sense: Sense,
}

impl Row {
    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row {
            coeffs,
            rhs,
            sense: Sense::Le,
        }
    }

    pub fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row {
            coeffs,
            rhs,
            sense: Sense::Eq,
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let s = self.activity(x) - self.rhs;
        match self.sense {
            Sense::Le => s.max(0.0),
            Sense::Eq => s.abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarBounds {
    pub lo: f64,
    pub hi: f64,
}

impl VarBounds {
    pub const FREE: VarBounds = VarBounds {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    pub const NONNEG: VarBounds = VarBounds {
        lo: 0.0,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        VarBounds { lo, hi }
    }

    pub fn fixed(v: f64) -> Self {
        VarBounds { lo: v, hi: v }
    }
}

/// `min cost . x + objective_offset` subject to `rows` and `bounds`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub cost: Vec<f64>,
    pub rows: Vec<Row>,
    pub bounds: Vec<VarBounds>,
    /// Constant term dropped from the linear cost (reported objectives include it).
    pub objective_offset: f64,
}

impl LinearProgram {
    pub fn new(cost: Vec<f64>, rows: Vec<Row>, bounds: Vec<VarBounds>) -> Self {
        LinearProgram {
            n_vars: cost.len(),
            cost,
            rows,
            bounds,
            objective_offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cost.len() != self.n_vars || self.bounds.len() != self.n_vars {
            return Err(Error::InputShape {
                expected: self.n_vars,
                got: self.cost.len().min(self.bounds.len()),
            });
        }
        for row in &self.rows {
            check_indices(&row.coeffs, self.n_vars)?;
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.cost, x) + self.objective_offset
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .rows
            .iter()
            .map(|r| r.violation(x))
            .fold(0.0, f64::max);
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(b, &v)| (b.lo - v).max(v - b.hi).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }
}

/// A MILP fully instantiated for one input vector. Always a minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteMILP {
    pub lp: LinearProgram,
    pub integrality: Vec<bool>,
    pub input: Vec<f64>,
}

impl ConcreteMILP {
    pub fn n_vars(&self) -> usize {
        self.lp.n_vars
    }

    pub fn integer_indices(&self) -> Vec<usize> {
        (0..self.n_vars()).filter(|&j| self.integrality[j]).collect()
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        (0..self.n_vars()).filter(|&j| !self.integrality[j]).collect()
    }

    /// (continuous vars, integer vars, rows).
    pub fn census(&self) -> (usize, usize, usize) {
        let ints = self.integrality.iter().filter(|&&b| b).count();
        (self.n_vars() - ints, ints, self.lp.rows.len())
    }

    pub fn is_integral(&self, x: &[f64], int_tol: f64) -> bool {
        self.integrality
            .iter()
            .zip(x)
            .all(|(&int, &v)| !int || (v - v.round()).abs() <= int_tol)
    }

    pub fn is_feasible(&self, x: &[f64], int_tol: f64, feas_tol: f64) -> bool {
        x.len() == self.n_vars()
            && self.is_integral(x, int_tol)
            && self.lp.max_violation(x) <= feas_tol
    }
}

/// One monomial `u[input]^exponent`; exponent 0 is the constant term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial {
    pub input: usize,
    pub exponent: u32,
}

/// Univariate polynomial features `1, u_0, u_0^2, .., u_1, u_1^2, ..` without cross terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub input_dim: usize,
    pub degree: u32,
    pub terms: Vec<Monomial>,
}

impl FeatureMap {
    pub fn univariate(input_dim: usize, degree: u32) -> Self {
        let mut terms = vec![Monomial {
            input: 0,
            exponent: 0,
        }];
        for input in 0..input_dim {
            for exponent in 1..=degree {
                terms.push(Monomial { input, exponent });
            }
        }
        FeatureMap {
            input_dim,
            degree,
            terms,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn evaluate(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.input_dim {
            return Err(Error::InputShape {
                expected: self.input_dim,
                got: u.len(),
            });
        }
        Ok(self
            .terms
            .iter()
            .map(|t| {
                if t.exponent == 0 {
                    1.0
                } else {
                    u[t.input].powi(t.exponent as i32)
                }
            })
            .collect())
    }
}

/// Variables a cut may touch and the input coordinates feeding its features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutPattern {
    pub vars: Vec<usize>,
    pub inputs: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsMode {
    Fixed(f64),
    Learned,
}

impl Default for RhsMode {
    fn default() -> Self {
        RhsMode::Fixed(100.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    /// Length of the global input vector `u`.
    pub input_dim: usize,
    pub cuts: Vec<CutPattern>,
    /// Feature map applied to each cut's selected inputs.
    pub feature_map: FeatureMap,
    pub rhs_mode: RhsMode,
}

impl SurrogateSpec {
    /// `n_cuts` cuts over every variable, each fed the full input vector.
    pub fn dense(n_cuts: usize, n_vars: usize, input_dim: usize, degree: u32) -> Self {
        let pattern = CutPattern {
            vars: (0..n_vars).collect(),
            inputs: (0..input_dim).collect(),
        };
        SurrogateSpec {
            input_dim,
            cuts: vec![pattern; n_cuts],
            feature_map: FeatureMap::univariate(input_dim, degree),
            rhs_mode: RhsMode::default(),
        }
    }

    pub fn n_cuts(&self) -> usize {
        self.cuts.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_map.len()
    }

    /// Pattern variables of cut `v` plus the learned RHS slot, if any.
    pub fn slots(&self, v: usize) -> usize {
        self.cuts[v].vars.len() + usize::from(self.rhs_mode == RhsMode::Learned)
    }

    pub fn validate(&self, n_vars: usize) -> Result<()> {
        for cut in &self.cuts {
            for &j in &cut.vars {
                if j >= n_vars {
                    return Err(Error::VariableIndex { index: j, n_vars });
                }
            }
            if cut.inputs.len() != self.feature_map.input_dim {
                return Err(Error::InputShape {
                    expected: self.feature_map.input_dim,
                    got: cut.inputs.len(),
                });
            }
            if let Some(&i) = cut.inputs.iter().find(|&&i| i >= self.input_dim) {
                return Err(Error::Config(format!(
                    "cut input index {i} out of range for input_dim {}",
                    self.input_dim
                )));
            }
        }
        Ok(())
    }

    /// Features of cut `v` at input `u`.
    pub fn features(&self, v: usize, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.input_dim {
            return Err(Error::InputShape {
                expected: self.input_dim,
                got: u.len(),
            });
        }
        let local: Vec<f64> = self.cuts[v].inputs.iter().map(|&i| u[i]).collect();
        self.feature_map.evaluate(&local)
    }
}

/// Coefficient tensor `theta[v][slot][k]`, stored flat, with box bound `theta_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct Theta {
    offsets: Vec<usize>,
    slots: Vec<usize>,
    n_features: usize,
    pub values: Vec<f64>,
    pub theta_max: f64,
}

impl Theta {
    pub fn zeros(spec: &SurrogateSpec, theta_max: f64) -> Self {
        let n_features = spec.n_features();
        let slots: Vec<usize> = (0..spec.n_cuts()).map(|v| spec.slots(v)).collect();
        let mut offsets = Vec::with_capacity(slots.len());
        let mut total = 0;
        for &s in &slots {
            offsets.push(total);
            total += s * n_features;
        }
        Theta {
            offsets,
            slots,
            n_features,
            values: vec![0.0; total],
            theta_max,
        }
    }

    pub fn from_nested(spec: &SurrogateSpec, nested: &[Vec<Vec<f64>>], theta_max: f64) -> Result<Self> {
        let mut theta = Theta::zeros(spec, theta_max);
        if nested.len() != spec.n_cuts() {
            return Err(Error::InputShape {
                expected: spec.n_cuts(),
                got: nested.len(),
            });
        }
        for (v, cut) in nested.iter().enumerate() {
            if cut.len() != theta.slots[v] {
                return Err(Error::InputShape {
                    expected: theta.slots[v],
                    got: cut.len(),
                });
            }
            for (s, slot) in cut.iter().enumerate() {
                if slot.len() != theta.n_features {
                    return Err(Error::InputShape {
                        expected: theta.n_features,
                        got: slot.len(),
                    });
                }
                for (k, &val) in slot.iter().enumerate() {
                    let idx = theta.index(v, s, k);
                    theta.values[idx] = val;
                }
            }
        }
        Ok(theta)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.slots.len())
            .map(|v| {
                (0..self.slots[v])
                    .map(|s| (0..self.n_features).map(|k| self.get(v, s, k)).collect())
                    .collect()
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn index(&self, v: usize, slot: usize, k: usize) -> usize {
        self.offsets[v] + slot * self.n_features + k
    }

    #[inline]
    pub fn get(&self, v: usize, slot: usize, k: usize) -> f64 {
        self.values[self.index(v, slot, k)]
    }

    pub fn set(&mut self, v: usize, slot: usize, k: usize, val: f64) {
        let i = self.index(v, slot, k);
        self.values[i] = val;
    }

    pub fn within_box(&self) -> bool {
        self.values.iter().all(|t| t.abs() <= self.theta_max)
    }

    pub fn clamp_to_box(&mut self) {
        let m = self.theta_max;
        for t in &mut self.values {
            *t = t.clamp(-m, m);
        }
    }
}

/// On-disk form of a trained surrogate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThetaArtifact {
    pub spec: SurrogateSpec,
    pub theta: Vec<Vec<Vec<f64>>>,
    pub theta_max: f64,
}

impl ThetaArtifact {
    pub fn new(spec: &SurrogateSpec, theta: &Theta) -> Self {
        ThetaArtifact {
            spec: spec.clone(),
            theta: theta.to_nested(),
            theta_max: theta.theta_max,
        }
    }

    pub fn into_parts(self) -> Result<(SurrogateSpec, Theta)> {
        let theta = Theta::from_nested(&self.spec, &self.theta, self.theta_max)?;
        Ok((self.spec, theta))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

/// Instantiate the learned cuts at input `u` as `<=` rows.
pub fn assemble_cuts(u: &[f64], theta: &Theta, spec: &SurrogateSpec) -> Result<Vec<Row>> {
    if u.len() != spec.input_dim {
        return Err(Error::InputShape {
            expected: spec.input_dim,
            got: u.len(),
        });
    }
    let mut rows = Vec::with_capacity(spec.n_cuts());
    for (v, cut) in spec.cuts.iter().enumerate() {
        let phi = spec.features(v, u)?;
        let poly = |slot: usize| -> f64 {
            phi.iter()
                .enumerate()
                .map(|(k, f)| theta.get(v, slot, k) * f)
                .sum()
        };
        let coeffs = cut
            .vars
            .iter()
            .enumerate()
            .map(|(s, &j)| (j, poly(s)))
            .collect();
        let rhs = match spec.rhs_mode {
            RhsMode::Fixed(b) => b,
            RhsMode::Learned => poly(cut.vars.len()),
        };
        rows.push(Row::le(coeffs, rhs));
    }
    Ok(rows)
}

/// Original rows and bounds, then `cuts` in order; integrality dropped.
pub fn build_surrogate_lp(milp: &ConcreteMILP, cuts: &[Row]) -> Result<LinearProgram> {
    for cut in cuts {
        check_indices(&cut.coeffs, milp.n_vars())?;
    }
    let mut lp = milp.lp.clone();
    lp.rows.extend_from_slice(cuts);
    Ok(lp)
}

fn check_indices(coeffs: &[(usize, f64)], n_vars: usize) -> Result<()> {
    match coeffs.iter().find(|&&(j, _)| j >= n_vars) {
        Some(&(index, _)) => Err(Error::VariableIndex { index, n_vars }),
        None => Ok(()),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
