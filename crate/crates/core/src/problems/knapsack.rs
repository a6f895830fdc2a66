//! Two-variable knapsack whose second row moves with a scalar input `u`:
//!
//! ```text
//!   max 4.8 x1 + 6 x2
//!   s.t. 4 x1 + 3 x2 <= 70
//!        100u x1 + 85 x2 <= 800u + 680
//!        0 <= x1, x2 <= 17, integer
//! ```

use crate::model::{ConcreteMILP, LinearProgram, Row, SurrogateSpec, VarBounds};

pub const U_RANGE: (f64, f64) = (0.1, 1.5);

pub fn instantiate(u: f64) -> ConcreteMILP {
    let rows = vec![
        Row::le(vec![(0, 4.0), (1, 3.0)], 70.0),
        Row::le(vec![(0, 100.0 * u), (1, 85.0)], 800.0 * u + 680.0),
    ];
    ConcreteMILP {
        lp: LinearProgram::new(vec![-4.8, -6.0], rows, vec![VarBounds::new(0.0, 17.0); 2]),
        integrality: vec![true, true],
        input: vec![u],
    }
}

/// Three cuts over both variables, quadratic in `u`, right-hand side 100.
pub fn default_spec() -> SurrogateSpec {
    SurrogateSpec::dense(3, 2, 1, 2)
}

/// Cut coefficients that make the surrogate LP mimic the MILP on the
/// illustrative inputs, rounded to one decimal.
pub fn published_theta() -> Vec<Vec<Vec<f64>>> {
    vec![
        vec![vec![17.9, -56.9, 45.1], vec![-4.5, 25.3, -14.3]],
        vec![vec![7.4, 6.4, -7.9], vec![0.0, 0.0, 0.0]],
        vec![vec![-0.2, 14.5, -9.4], vec![12.0, -9.7, 3.7]],
    ]
}
