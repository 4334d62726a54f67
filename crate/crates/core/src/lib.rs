pub mod bench;
pub mod circuit;
pub mod cli;
pub mod error;
pub mod instance;
pub mod io;
pub mod matrix;
pub mod near;
pub mod random_search;
pub mod report;
pub mod systematic;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, Factorization, IndexSet, NullBasis, Tolerances};
