//! Cooperative pre-caching planner for social groups.
//!
//! A group of users wants the same content by a deadline. Each user
//! pre-caches a fraction `x_i` from the server and later picks up missing
//! fractions from users she encounters (directly, or over multi-hop relay
//! paths). This crate computes cache allocations that minimize the expected
//! total download cost, along with lower bounds, optimality-gap estimates,
//! and a trace-driven simulator for real or synthetic contact traces.
//!
//! Module map:
//! - [`prob`]: encounter model (probability matrices, meeting
//!   configurations, neighborhood probabilities)
//! - [`lp`]: dense two-phase simplex used by every formulation
//! - [`planner`]: exact cost formulations (full, reduced, symmetric) and
//!   cost evaluation
//! - [`heuristics`]: IAD / PSC / AlgCov allocation heuristics and gap
//!   estimates
//! - [`indirect`]: multi-segment relay reachability and the effective
//!   direct model it induces
//! - [`setcover`]: per-configuration set-cover lower bound
//! - [`sim`]: contact traces, probability estimation, replay, and the
//!   experiment harness

pub mod error;
pub mod heuristics;
pub mod indirect;
pub mod lp;
pub mod planner;
pub mod prob;
pub mod setcover;
pub mod sim;

mod par;
mod set;

pub use error::{Error, Result};
pub use set::UserSet;
