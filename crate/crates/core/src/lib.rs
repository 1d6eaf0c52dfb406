pub mod cur;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod oracle_bench;
pub mod rng;
pub mod sketch;
pub mod source;
pub mod solvers;
pub mod spsd;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
