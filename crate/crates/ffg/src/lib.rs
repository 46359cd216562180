//! Truncated formal transformation groups.
//!
//! Everything here works with formal maps `u(x) = Ux + higher order terms`
//! truncated at a fixed degree: composition and inversion of such maps,
//! detection of eigenvalue resonances, solving `g` composed with itself `k`
//! times equal to `u` degree by degree, and formal logarithms/exponentials
//! that realize a map as the time-1 flow of a polynomial vector field.
//!
//! The flow direction (`exp_flow`) always succeeds; the inverse problems
//! (`functional_root`, `log_transform`) can hit genuine obstructions, which
//! are reported with the exact monomial and eigenvalue data that blocks the
//! solve rather than as a generic failure.

// index loops over matrices and coefficient tables read better than
// enumerate chains when several arrays move in lockstep
#![allow(clippy::needless_range_loop)]
#![allow(clippy::manual_is_multiple_of)]

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod flows;
pub mod linalg;
pub mod linfun;
pub mod resonance;
pub mod series;
pub mod textio;
pub mod transform;

pub use error::{Error, Result};
pub use series::{Coefficient, Exponent, Series, Tolerance, DEFAULT_ZERO_TOL};
pub use transform::{GroupTag, Transformation};
