pub mod error;
pub mod flow;
pub mod limitlaw;
pub mod model;
pub mod numeric;
pub mod scalar;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working precision used by the binary and the experiments.
pub type Real = f64;
