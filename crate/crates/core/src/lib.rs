//! Traffic-rate metadata attacks on smart homes, and the defenses against
//! them, evaluated on synthetic packet traces.
//!
//! The pipeline is: [`synth`] generates a ground-truth [`trace::Trace`],
//! [`defenses`] transform it, [`trace::project_view`] reduces it to what an
//! adversary observes, [`adversary`] identifies devices and infers
//! behaviors, and [`eval`] scores the outcome.

pub mod adversary;
pub mod cli;
pub mod defenses;
pub mod eval;
pub mod seed;
pub mod synth;
pub mod trace;
