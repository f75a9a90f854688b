//! Loop-free tensor networks: dense and Abelian-symmetric tensors, tree
//! networks with unitary and canonical gauges, tensor-product-operator
//! Hamiltonians and a variational ground-state solver.

pub mod dense;
pub mod error;
pub(crate) mod io;
pub mod kernel;
pub mod models;
pub mod network;
pub mod operators;
pub mod solver;
pub mod symm;

pub use dense::{DenseTensor, ExpMethod, SingularSpectrum, Truncation};
pub use error::{Result, TnError};

/// Double-precision complex scalar used throughout.
pub type C64 = num_complex::Complex64;
