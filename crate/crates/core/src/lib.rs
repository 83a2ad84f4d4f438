//! Kernels for a physics-editable material-point simulation pipeline.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded
//! anywhere; file formats, scene loading and the command line live in the
//! companion `editsim` crate.
//!
//! Module map:
//!
//! - [`material`]: per-point material fields, elastic moduli and wave speeds.
//! - [`conditioning`]: soft assignment of points to part prompts and
//!   hierarchical cross-attention over dense feature matrices.
//! - [`supervision`]: task, wave-continuity, contrastive and assignment losses,
//!   with analytic gradients and a central-difference checker.
//! - [`fill`]: surface-to-interior particle filling and property inheritance.
//! - [`mpm`]: MLS-MPM solver with six constitutive models.
//! - [`schedule`]: temporal interventions with ramps, clamps and rate caps.
//! - [`trajectory`] and [`raster`]: recorded motion and conditioning frames.
//!
//! Enable the `parallel` feature to run particle and grid phases on rayon.
//! Reductions are ordered per grid node, so results do not depend on the
//! number of worker threads.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::too_many_arguments)]
// `!(x > 0.0)` is how validation rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod conditioning;
pub mod dense;
mod error;
pub mod fill;
pub mod material;
pub mod math;
pub mod mpm;
mod par;
pub mod raster;
pub mod schedule;
pub mod spatial;
pub mod supervision;
pub mod trajectory;

pub use error::{Error, Result};

pub use nalgebra::{Matrix3, Vector3};
