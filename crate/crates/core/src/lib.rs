//! Analysis and simulation of a multi-class link under a bit-rate
//! downgrading admission policy.
//!
//! Jobs of class `j` request `A_j` bandwidth units. Below the occupancy
//! threshold `C0` they are admitted as requested; between `C0` and the
//! capacity `C` they are admitted as minimal-rate class-1 jobs; at `C` they
//! are rejected. Under the scaling `lambda -> N lambda`, `C -> cN`,
//! `C0 -> c0 N` the crate provides:
//!
//! - [`model`]: parameters, regime checks, fluid regions and the fixed point;
//! - [`spectral`] and [`invariant`]: the exact law of the occupancy offset;
//! - [`fluid`]: the limiting ODE and its stability matrix;
//! - [`sim`]: an exact event-driven simulator of the finite system;
//! - [`loss`]: the pure-loss benchmark;
//! - [`provisioning`]: threshold sizing for a target loss probability.

pub mod error;
pub mod fluid;
pub mod invariant;
pub mod loss;
pub mod model;
pub mod poly;
pub mod provisioning;
pub mod report;
pub mod sim;
pub mod spectral;

pub use error::{Error, ErrorKind, Result};
pub use invariant::{InvariantDistribution, MomentSummary, SummedMoments};
pub use model::{FixedPoint, FluidState, ModelParams, RegimeReport, RegionTag};
pub use spectral::{PolyPair, RootProfile};
