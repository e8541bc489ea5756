//! Exact-diagonalization toolkit for energy-smoothing random unitary
//! ensembles: windowed block-Haar sampling, dephased equilibrium states,
//! Gibbs comparisons and local distinguishability.

pub mod basis;
pub mod ensemble;
pub mod equilibrium;
pub mod dynamics;
pub mod error;
pub mod gibbs;
pub mod hamiltonian;
pub mod lattice;
pub mod linalg;
pub mod locality;
pub mod microcanonical;
pub mod rng;
pub mod spectrum;
pub mod stats;
pub mod weingarten;
pub mod windows;

pub use error::{Error, Result};
