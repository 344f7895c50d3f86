//! Structure-preserving reduced-order modeling of the 1D-1V Vlasov–Poisson system:
//! a Hamiltonian particle-in-cell model, a proper symplectic decomposition, and an
//! autoencoder with a Hamiltonian neural network for the reduced dynamics.

pub mod diagnostics;
pub mod error;
pub mod fom;
pub mod init;
pub mod integrator;
pub mod io;
pub mod neural;
pub mod parallel;
pub mod pic;
pub mod psd;
pub mod rom;
pub mod training;

pub use error::{Error, Result};
pub use integrator::{PhaseState, SeparableSystem};
pub use parallel::ExecMode;
