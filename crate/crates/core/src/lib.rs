//! Exact and material-truncated models of a double-well dipole coupled to a
//! single cavity mode.

pub mod analysis;
pub mod error;
pub mod fockspace;
pub mod gauge;
pub mod lindblad;
pub mod linalg;
pub mod matter1d;

pub use error::{Error, Result};
