pub mod active_subspace;
pub mod cli;
pub mod conservative;
pub mod error;
pub mod fem;
pub mod function;
pub mod pipeline;
pub mod problems;
pub mod qp;
pub mod reduced;
pub mod rng;
pub mod surrogate;

pub use error::{Error, Result};
