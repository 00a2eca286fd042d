//! Wasserstein k-centres clustering of one-dimensional distributional data.

pub mod cli;
pub mod cluster;
pub mod error;
pub mod gauss;
pub mod geometry;
pub mod gpca;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod sim;

pub use error::{Result, WkccError};
