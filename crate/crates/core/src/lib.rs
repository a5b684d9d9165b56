//! Availability, diversity, outage and capacity analysis for networks of
//! free-space optical ground stations, driven by binary cloud-mask time
//! series.

pub mod capacity;
pub mod cli;
pub mod cloudgrid;
pub mod correlation;
pub mod dgmodel;
pub mod error;
pub mod io;
pub mod optimizer;
pub mod orbits;

pub use error::{Error, Result};
