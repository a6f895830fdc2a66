//! Surrogate linear programs for parametric mixed-integer programs.
//!
//! A surrogate keeps the rows of the original MILP, drops integrality and adds
//! cuts whose coefficients are polynomials of the instance input. The cut
//! coefficients are trained so that the surrogate's LP optimum matches the MILP
//! optimum on sample inputs.

pub mod bench;
pub mod error;
pub mod io;
pub mod lp;
pub mod milp;
pub mod model;
pub mod oracle;
pub mod par;
pub mod problems;
pub mod trainer;

pub use error::{Error, Result};
