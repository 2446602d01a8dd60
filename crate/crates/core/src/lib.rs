pub mod error;
pub mod observables;
pub mod operators;
pub mod potentials;
pub mod radial;
pub mod solver;

pub use error::{Error, ErrorCategory, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
