//! Operator algebra for the harmonic / inverted oscillator pair on a truncated
//! Fock space: ladder and Hamiltonian matrices, the Dyson map and its metric,
//! coherent states and their dynamics, and the verification report.

pub mod coherent;
pub mod dyson;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod poly;
pub mod report;
pub mod wide;

pub use error::{Error, Result};
pub use fock::{OperatorMatrix, PhysicalParams, StateVector, SubBlock, C64};
