pub mod data;
pub mod elasticity;
pub mod error;
pub mod forest;
pub mod linreg;
pub mod pricing;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};
