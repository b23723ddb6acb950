//! Adiabatic state preparation for the spinful Su-Schrieffer-Heeger-Hubbard chain.
//!
//! The crate builds the Jordan-Wigner qubit Hamiltonian of the chain, prepares
//! the non-interacting Slater ground state with a Givens network, switches the
//! Hubbard interaction on through a Trotterized schedule on a full statevector,
//! and extracts the many-body Berry phase and the sublattice polarization,
//! either exactly or from sampled bit strings. An exact-diagonalization oracle
//! in a fixed spin sector checks the sign conventions at small sizes.

pub mod adiabatic;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod simulator;
pub mod singleparticle;
pub mod stateprep;
pub mod sum;

pub use error::{Error, Result};
pub use model::{Boundary, SpinFilling, SshhParams};
pub use num_complex::Complex64;
