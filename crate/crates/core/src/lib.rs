//! Hybrid Coulomb/thruster force allocation for spacecraft formations.

pub mod allocator;
pub mod error;
pub mod formation;
pub mod linalg;
pub mod scenario;
pub mod sdp;
pub mod sim;

pub use error::{Error, Result};
