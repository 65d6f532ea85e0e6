pub mod algorithms;
pub mod design;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod harness;
pub mod instances;
pub mod oracle;

pub use error::{Error, Result};
