//! Ballistic optimal transport on discrete measures: deterministic and
//! stochastic costs, their dual formulas, interpolation identities and
//! optimal maps, checked against independent LP and dynamic-programming oracles.

pub mod ballistic_det;
pub mod bolza;
pub mod cli;
pub mod convex_core;
pub mod discrete_ot;
pub mod dynamic_cost;
pub mod error;
pub mod ext;
pub mod lattice;
pub mod linalg;
pub mod lp;
pub mod measures;
pub mod par;
pub mod stochastic_ctrl;

pub use error::{Error, Result};
pub use ext::ExtReal;
