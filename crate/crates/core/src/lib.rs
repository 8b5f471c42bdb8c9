//! Optimal extraction of a commodity whose price follows a drifted Brownian
//! motion with two-sided hyper-exponential jumps, where each unit sold lowers
//! the price by a fixed amount.
//!
//! The optimal policy sells just enough to keep the impacted price at or below
//! a threshold `b*`. This crate computes that threshold and the value function
//! in closed form, checks the optimality conditions numerically, and confirms
//! the closed forms by Monte Carlo.

pub mod error;
pub mod instances;
pub mod model;
pub mod oracle;
pub mod roots;
pub mod sensitivity;
pub mod sim;
pub mod solver;
pub mod value;
pub mod verify;

pub use error::{Error, Result};
pub use model::{sample_jump, validate, JumpComponent, JumpMix, ModelParams, ValidatedParams};
pub use roots::{char_eval, char_eval_poly, solve_roots, RootSet};
pub use solver::cofactor::{cofactor_identity_suite, CofactorReport};
pub use solver::{solve, BarrierSolution, IdentityResiduals};
pub use sensitivity::{sweep_bstar, sweep_roots, sweep_value, SweepParam, SweepReport};
pub use sim::{mc_stopping, mc_value, mc_value_many, PathConfig, SimEstimate};
pub use value::{Region, StatePoint, ValueDerivs};
pub use verify::{run_hjb_suite, GridSpec, HjbReport};
