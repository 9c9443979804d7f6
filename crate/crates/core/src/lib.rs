//! Decoy-state post-processing for measurement-device-independent QKD.

pub mod decoy;
pub mod error;
pub mod finitesize;
pub mod io;
pub mod keyrate;
pub mod optics;
pub mod protocol;
pub mod simulator;

pub use error::{Error, Result};
