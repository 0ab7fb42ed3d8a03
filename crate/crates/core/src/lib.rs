//! Steady-state Poisson-Nernst-Planck transport with classical density
//! functional theory excess chemical potentials on a uniform 3D lattice.

pub mod cdft;
pub mod checks;
pub mod config;
pub mod constants;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod pnp;
pub mod report;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
