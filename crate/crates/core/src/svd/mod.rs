//! Thin SVD maintained under rank-one modifications.

mod factored;
mod jacobi;

pub use factored::{FactoredMatrix, UpdateCore, REORTH_CADENCE};
pub use jacobi::{jacobi_svd, orthonormalize_columns, SmallSvd};
