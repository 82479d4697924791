//! Particle-based stochastic simulation of neutral boundary-layer wind flow
//! with embedded actuator-disc turbine models.
//!
//! The crate holds the algorithmic core only: domain geometry, particle-to-grid
//! estimators, the stochastic velocity integrator and its turbulence closure,
//! boundary treatments, the per-step conservation constraints, the turbine
//! force models and the blade-element-momentum cross check. Everything here is
//! `no_std` (alloc only) and deterministic: randomness enters exclusively
//! through counter-based streams keyed by `(seed, particle id, step, phase)`,
//! so results do not depend on scheduling or worker count.
//!
//! Orchestration, file formats and the command line live in the companion
//! `stochwind` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bem;
pub mod boundaries;
pub mod constraints;
pub mod domain;
pub mod estimators;
mod fmath;
pub mod rng;
pub mod sde;
pub mod turbine;
pub mod vec3;

pub use domain::{CartesianGrid, CellRecord, ModelConstants, Particle, TurbineConfig};
pub use rng::CounterRng;
