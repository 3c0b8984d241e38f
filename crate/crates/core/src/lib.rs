//! Multigrid solvers for elliptic optimal control with sparsity and box
//! constraints: matrix-free operators, local Fourier analysis of collective
//! Jacobi and mass-based Braess-Sarazin smoothers, geometric multigrid with
//! coarsening by 2, 3 or 4, and a semi-smooth Newton outer loop.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod lfa;
pub mod multigrid;
pub mod oracle;
pub mod problems;
pub mod smoothers;
pub mod ssn;

pub use error::{Error, Result};
pub use grid::{BlockField, Coarsening, GridSpec, MaskField, SaddleOperator, ScalarField};
