//! Dense linear algebra, seeded randomness and the small symmetric eigensolver.

mod eigen;
mod matrix;
mod rng;

pub use eigen::{sym_eig_topc, SymmetricEigen};
pub use matrix::{matmul, pairwise_sq_dist, DenseMatrix};
pub use rng::SeededRng;
