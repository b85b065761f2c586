//! Preamble-based least-squares channel estimation for CP-OFDM and OFDM/OQAM.
//!
//! The crate covers the full chain used to compare training designs under an
//! equal transmit-power budget: DFT submatrix algebra, a sample-spaced veh-A
//! channel, a CP-OFDM modem, an OQAM synthesis/analysis filter bank with its
//! intrinsic-interference table, every preamble family (full, sparse,
//! P-sparse, sparse-data, equipowered full), the estimators, closed-form
//! predictions and the Monte Carlo harness that produces NMSE curves.

pub mod analysis;
pub mod channel;
pub mod cpofdm;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod oqam;
pub mod preamble;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use spectral::{IndexSet, SystemConfig};
