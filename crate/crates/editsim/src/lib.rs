//! File formats, scenes, trajectory export and the `editsim` command line,
//! on top of the `editsim-core` numerics.

pub mod analyze;
pub mod cli;
pub mod error;
pub mod export;
pub mod field_io;
pub mod scene;

pub use editsim_core as core;
pub use error::{AppError, AppResult};
