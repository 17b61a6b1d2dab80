//! Desk-scale laboratory for distilling a normalizing-flow coupling into a
//! flow-matching student.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: dense tensors, a reverse-mode tape, finite differences, Adam.
//! - [`datasets`]: synthetic class-conditional distributions with exact densities.
//! - [`nf_teacher`]: the invertible conditional coupling flow and its coupling encoder.
//! - [`couplings`]: independent, minibatch-OT, semi-discrete-OT and teacher couplings.
//! - [`fm_student`]: the velocity network and the flow-matching loss.
//! - [`sampling`]: Euler/Heun integration, schedules and guidance.
//! - [`metrics`]: z-space distances, curvature, exact W2, golden-section search.

pub mod couplings;
pub mod datasets;
mod error;
pub mod fm_student;
pub mod metrics;
pub mod nf_teacher;
pub mod numerics;
pub mod sampling;

pub use error::{Error, Result};
