pub mod embedding;
pub mod error;
pub mod estimator;
pub mod fd;
pub mod grid_calculus;
pub mod manifold;
pub mod maps;
pub mod prior;
pub mod risk;
pub mod subriemannian;

pub use error::{Error, Result};
