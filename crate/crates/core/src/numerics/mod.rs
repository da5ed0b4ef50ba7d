//! Linear-algebra kernels shared by the estimators and inference code.

pub mod krr;
pub mod ols;
pub mod stats;

pub use krr::{krr_fit, KernelFit, KrrParams};
pub use ols::{ols, ColumnSpace, DesignMatrix, LinearFit, OlsSolver};
