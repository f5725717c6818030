pub mod error;
pub mod ortho;
pub mod rac;
pub mod scalar;
pub mod seprank;
pub mod tasks;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::{rat, Rational, Scalar, ScalarKind};
