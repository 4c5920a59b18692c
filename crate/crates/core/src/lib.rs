//! Equilibrium shapes of strained pumpkin balloons.

pub mod constitutive;
pub mod constraints;
pub mod error;
pub mod gore_mesh;
pub mod loads;
pub mod oracles;
pub mod pipeline;
pub mod postprocess;
pub mod shape_finding;
pub mod solver;

pub use error::{Error, Result};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
