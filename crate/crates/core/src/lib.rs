//! Simulation of deterministic photonic Bell and GHZ state generation with a
//! single qubit ultrastrongly coupled to three resonator modes.
//!
//! The crate is organised bottom-up:
//!
//! * [`hilbert`] builds the truncated Fock ⊗ Fock ⊗ Fock ⊗ qubit space and the
//!   bare ladder/Pauli operators on it.
//! * [`hamiltonian`] assembles the generalized quantum Rabi Hamiltonian and its
//!   time-dependent variant under the qubit-frequency schedule.
//! * [`spectrum`] diagonalizes, scans levels against the qubit frequency and
//!   extracts effective couplings from avoided crossings.
//! * [`perturbation`] has the closed-form effective couplings and a path-sum
//!   engine over bare-state transition graphs.
//! * [`lindblad`] builds dressed collapse operators and integrates the master
//!   equation.
//! * [`protocol`] runs the two-step entanglement protocol and fidelity sweeps.
//!
//! Frequencies and times are in units of the mode-a frequency (`omega_a = 1`
//! in every default configuration) and its inverse.

pub mod error;
pub mod hamiltonian;
pub mod hilbert;
pub mod lindblad;
pub mod perturbation;
pub mod protocol;
pub mod spectrum;

pub use error::{Error, Result};

/// Complex scalar used for every matrix and state in the crate.
pub type C64 = num_complex::Complex64;
