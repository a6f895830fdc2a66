//! Built-in parametric problem families.

pub mod hybrid;
pub mod knapsack;
pub mod scheduling;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConcreteMILP, SurrogateSpec};

pub use hybrid::HybridFamily;
pub use scheduling::SchedulingFamily;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Knapsack,
    Hybrid,
    Scheduling,
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knapsack" => Ok(FamilyKind::Knapsack),
            "hybrid" => Ok(FamilyKind::Hybrid),
            "scheduling" => Ok(FamilyKind::Scheduling),
            other => Err(Error::Config(format!("unknown family {other:?}"))),
        }
    }
}

/// Size parameters for building a family; unused fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyDims {
    pub horizon: usize,
    /// Engine levels; `None` draws from {1, 2, 3}.
    pub levels: Option<u32>,
    pub batches: usize,
    pub units: usize,
    pub slots: usize,
}

impl Default for FamilyDims {
    fn default() -> Self {
        FamilyDims {
            horizon: 10,
            levels: None,
            batches: 13,
            units: 4,
            slots: 8,
        }
    }
}

/// One concrete family instance: fixed attributes, varying input `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Knapsack,
    Hybrid(HybridFamily),
    Scheduling(SchedulingFamily),
}

const INPUT_STREAM: u64 = 1;
const MAX_INPUT_DRAWS: usize = 1000;

impl Family {
    /// Draw family attributes from `seed`.
    pub fn build(kind: FamilyKind, dims: &FamilyDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match kind {
            FamilyKind::Knapsack => Family::Knapsack,
            FamilyKind::Hybrid => Family::Hybrid(HybridFamily::sample(dims.horizon, dims.levels, &mut rng)),
            FamilyKind::Scheduling => {
                Family::Scheduling(SchedulingFamily::sample(dims.batches, dims.units, dims.slots, &mut rng))
            }
        }
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            Family::Knapsack => FamilyKind::Knapsack,
            Family::Hybrid(_) => FamilyKind::Hybrid,
            Family::Scheduling(_) => FamilyKind::Scheduling,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Family::Knapsack => 1,
            Family::Hybrid(h) => h.horizon,
            Family::Scheduling(s) => s.input_dim(),
        }
    }

    pub fn instantiate(&self, u: &[f64]) -> Result<ConcreteMILP> {
        if u.len() != self.input_dim() {
            return Err(Error::InputShape {
                expected: self.input_dim(),
                got: u.len(),
            });
        }
        Ok(match self {
            Family::Knapsack => {
                if u[0] < knapsack::U_RANGE.0 || u[0] > knapsack::U_RANGE.1 {
                    log::warn!("knapsack input {} outside {:?}", u[0], knapsack::U_RANGE);
                }
                knapsack::instantiate(u[0])
            }
            Family::Hybrid(h) => h.instantiate(u),
            Family::Scheduling(s) => s.instantiate(u),
        })
    }

    /// `n` inputs, deterministic in `seed`. Scheduling inputs whose LP
    /// relaxation is infeasible are redrawn.
    pub fn sample_inputs(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INPUT_STREAM);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            out.push(self.draw_input(&mut rng)?);
        }
        Ok(out)
    }

    pub(crate) fn draw_input(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match self {
            Family::Knapsack => Ok(vec![rng.gen_range(knapsack::U_RANGE.0..=knapsack::U_RANGE.1)]),
            Family::Hybrid(h) => Ok(h.sample_demand(rng)),
            Family::Scheduling(s) => {
                for _ in 0..MAX_INPUT_DRAWS {
                    let u = s.draw_input(rng);
                    if s.relaxation_feasible(&u)? {
                        return Ok(u);
                    }
                    log::debug!("scheduling input with infeasible relaxation redrawn");
                }
                Err(Error::Config(format!(
                    "no feasible scheduling input in {MAX_INPUT_DRAWS} draws"
                )))
            }
        }
    }

    pub fn default_spec(&self) -> SurrogateSpec {
        match self {
            Family::Knapsack => knapsack::default_spec(),
            Family::Hybrid(h) => h.default_spec(),
            Family::Scheduling(s) => s.default_spec(),
        }
    }

    /// The default cut architecture with `cuts` and `degree` overridden.
    /// For scheduling, `cuts` counts cuts per batch.
    pub fn spec_with(&self, cuts: Option<usize>, degree: Option<u32>) -> SurrogateSpec {
        let mut spec = self.default_spec();
        if let Some(c) = cuts {
            spec.cuts = match self {
                Family::Scheduling(_) => spec
                    .cuts
                    .iter()
                    .flat_map(|p| std::iter::repeat(p.clone()).take(c))
                    .collect(),
                _ => spec.cuts.first().map(|p| vec![p.clone(); c]).unwrap_or_default(),
            };
        }
        if let Some(d) = degree {
            spec.feature_map = crate::model::FeatureMap::univariate(spec.feature_map.input_dim, d);
        }
        spec
    }

    /// Relative MIP gap used for training labels.
    pub fn default_label_gap(&self) -> f64 {
        match self {
            Family::Scheduling(_) => 0.01,
            _ => 0.0,
        }
    }
}
