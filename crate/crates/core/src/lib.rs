// SPDX-License-Identifier: Apache-2.0

//! Numerical laboratory for self-consistent mean-field dynamics of
//! fully-connected quantum models.
//!
//! * [`operators`]: dense single-site algebra, the w-model and rotor builders.
//! * [`dynamics`]: RK4 integration of the nonlinear von Neumann flow and the
//!   oscillation-amplitude diagnostic.
//! * [`spectrum`]: bound states of the frozen effective Hamiltonian and the
//!   regime they predict.
//! * [`classical`]: particle realization of the classical (Vlasov) limit and
//!   the pendulum frequency band.
//! * [`manybody`]: exact small-N evolution used as an oracle for the
//!   mean-field reduction.
//! * [`config`]: TOML run configurations and their validation.
//! * [`sweep`]: parallel runners behind the command-line subcommands.
//! * [`export`]: CSV and JSON output schemas.

// parameter checks are written as `!(v > 0.0)` so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod export;
mod kernel;
pub mod manybody;
pub mod operators;
pub mod signal;
pub mod spectrum;
pub mod sweep;

pub use error::{Error, Result};
