//! Lindblad master equations for chemical exchange in spin systems.

pub mod analysis;
pub mod error;
pub mod exchange;
pub mod expm;
pub mod generating;
pub mod models;
pub mod numeric;
pub mod propagation;
pub mod state;

pub use error::{Error, Result};
pub use numeric::POLICY;
