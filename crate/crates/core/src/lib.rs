pub mod bounds;
pub mod cli;
pub mod designs;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;

pub use error::{Error, Result};
