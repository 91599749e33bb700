//! Random walk in random environment on a Galton-Watson tree, studied
//! through the multitype tree of its edge local times.

pub mod env;
pub mod error;
pub mod height;
pub mod par;
pub mod reduce;
pub mod rng;
pub mod spine;
pub mod stats;
pub mod walk;

pub use env::{calibrate_two_point, EnvironmentModel, Kappa};
pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
