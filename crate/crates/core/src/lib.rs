//! Arbitrary-precision laboratory for stagnation phases of particle swarm
//! optimization.
//!
//! The crate runs the classical PSO process with exact-enough arithmetic to
//! follow swarms whose coordinates differ by thousands of binary orders of
//! magnitude, measures the per-dimension potential of the swarm, detects and
//! classifies stagnation phases, and computes the ensemble estimators used to
//! study them (drift of the logarithmic potential, increment decomposition,
//! Brownian-motion approximations and moment bounds).
//!
//! The main entry points are:
//!
//! * [`numerics`]: [`BigReal`](numerics::BigReal) and the precision policy,
//! * [`objectives`] and [`engine`]: the benchmark functions and the swarm,
//! * [`potential`] and [`stagnation`]: Φ, Ψ and the phase detector,
//! * [`estimators`] and [`lemma_checks`]: ensemble statistics and Monte-Carlo
//!   checks of the moment bounds,
//! * [`harness`]: configuration, parallel ensembles, persistence and reports.

pub mod engine;
pub mod estimators;
pub mod harness;
pub mod lemma_checks;
pub mod numerics;
pub mod objectives;
pub mod potential;
pub mod rng;
pub mod stagnation;

/// The types needed for most uses of the crate.
pub mod prelude {
    pub use crate::engine::{init_special, init_usual, run, step_particle, SwarmParams, SwarmState};
    pub use crate::numerics::{Arith, BigReal, PrecisionPolicy};
    pub use crate::objectives::{Objective, ObjectiveFunction, ObjectiveId};
    pub use crate::potential::PotentialTrace;
    pub use crate::rng::{RngStream, UniformSource};
    pub use crate::stagnation::{detect_stopping_times, partition_phases, StagnationConfig};
}
