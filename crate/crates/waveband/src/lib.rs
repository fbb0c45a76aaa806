//! Boundary-control wave-model pipeline for matrix Schrodinger operators
//! on the half-line.
//!
//! The crate simulates the boundary-control wave system, assembles the
//! control and connecting operators, performs the nest-diagonal
//! construction and triangular factorization, builds the wave model and
//! recovers the Hermitian matrix potential.

pub mod boundary_triple;
pub mod core;
pub mod error;
pub mod factorization;
pub mod forward;
pub mod linalg;
pub mod nest_diagonal;
pub mod operators;
pub mod cli;
pub mod wave_model;

pub use error::{Error, Result};
