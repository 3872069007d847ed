//! Sensor scheduling for continuous-time Kalman filtering.
//!
//! `M` sensors watch `N` independent linear systems; only the error
//! covariances matter, so scheduling reduces to steering coupled Riccati
//! flows. This crate computes
//!
//! - a convex performance lower bound over relaxed time-fraction
//!   assignments ([`bound`]),
//! - closed-form Whittle indices and the one-multiplier dual bound for
//!   scalar systems with identical sensors ([`whittle`]),
//! - ε-periodic switching schedules realizing the optimal fractions via
//!   Birkhoff–von Neumann decomposition ([`birkhoff`]),
//! - deterministic policy simulation against the bound ([`simulate`]).
//!
//! The numerical core ([`riccati`]) provides Lyapunov, algebraic-Riccati
//! and differential-Riccati solvers on dense matrices.
//!
//! The crate is `no_std`-compatible (with `alloc`); IO, file formats and
//! the CLI live in the companion `sensched-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod birkhoff;
pub mod bound;
pub mod linalg;
pub mod model;
pub mod riccati;
pub mod simulate;
pub mod whittle;

mod hungarian;

pub use model::{ConstraintMode, SchedulingProblem, SensorLink, SystemModel};
