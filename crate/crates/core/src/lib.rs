//! Explicit exponential rates of convergence in the renewal theorem.
//!
//! The crate evaluates a coupling-based bound on the tail of the coalescing
//! time of two renewal processes, searches its free parameters for the best
//! certified rate, and re-creates the coupling itself by simulation so that
//! every inequality along the way can be checked empirically.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod dist;
pub mod optimize;
pub mod quad;
pub mod rng;
pub mod sim;
mod serde_float;
pub mod stats;

pub use bounds::{BoundCertificate, BoundParams};
pub use dist::{InterArrivalModel, Law, UniformComponent};
pub use rng::RngStream;
