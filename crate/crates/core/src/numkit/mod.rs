//! Dense linear algebra and seeded sampling shared by every other module.
//!
//! Everything is `f64`. Matrices are row-major and immutable by convention once
//! handed to another module.

mod cholesky;
mod eigen;
mod matrix;
mod rng;
mod special;

pub use cholesky::{cholesky, solve_lower, solve_lower_transpose, spd_inverse};
pub use eigen::{eigh_symmetric, SymmetricEigen, MAX_JACOBI_DIM};
pub use matrix::{dot, Matrix};
pub use rng::{sample_gaussian, RngStream};
pub use special::ln_gamma;
