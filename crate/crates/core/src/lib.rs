//! Generalized geometric Brownian motion driven by an inverse subordinator.
//!
//! The memory kernel fixes the subordinator; everything else (moments,
//! densities, Monte-Carlo paths, option prices, calibration) follows from it.

pub mod calibrate;
pub mod cli;
pub mod error;
pub mod kernels;
pub mod lapinv;
pub mod moments;
pub mod pricing;
pub mod quad;
pub mod simulate;
pub mod specfun;

pub use error::{Error, Result};
pub use kernels::MemoryKernel;
pub use moments::MarketParams;
