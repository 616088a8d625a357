//! Random circuit sampling benchmarks on 1D qubit rings and chains.
//!
//! The crate generates Haar-random brickwork circuits, simulates them under
//! Lindblad noise (quantum trajectories or exact density matrices), evaluates
//! the usual fidelity estimators and fits exponential fidelity decays to obtain
//! an effective noise rate. An exact transfer-matrix evaluation of the
//! second-moment spin model provides an independent analytic reference.
//!
//! Bit convention: qubit 0 is the most significant bit of a basis index.

pub mod circuits;
pub mod density;
pub mod error;
pub mod estimators;
pub mod mcwf;
pub mod noise;
pub mod pauli;
pub mod protocols;
pub mod rng;
pub mod spinmodel;
pub mod statevec;
pub mod stats;

pub use error::{Error, Result};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
