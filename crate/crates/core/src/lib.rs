//! Hyperdimensional computing on distorted analog in-memory hardware: a model
//! of the cell and search nonlinearities, and gradient-based calibration of
//! encoders and node vectors so that hardware similarities match a target.

pub mod calibrate;
pub mod classify;
pub mod data;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod hv;
pub mod hw;
pub mod seed;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
