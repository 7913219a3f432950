//! Random walks in dynamic random environments: environments with a
//! regeneration field, the coupled walk, regeneration-block estimators of the
//! speed and diffusion matrix, renormalisation diagnostics and the statistical
//! tests that check the environment hypotheses.

pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod lattice;
pub mod plot;
pub mod regen;
pub mod renorm;
pub mod report;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
