//! Channel estimation for wideband hybrid-precoded mmWave massive MIMO uplinks.
//!
//! The crate simulates a multi-user OFDM uplink in which each user sees a
//! sparse Rician multipath channel, trains it with randomized constant-modulus
//! pilots, and recovers each user's line-of-sight path with distributed grid
//! matching pursuit (DGMP): a joint (all-subcarrier) greedy correlation
//! followed by a local grid-refinement loop that chases off-grid angles.
//!
//! Module map:
//!
//! - [`array`]: ULA steering vectors, DFT angle dictionaries, Kronecker and
//!   vectorization helpers.
//! - [`channel`]: random frequency-selective channel synthesis.
//! - [`pilots`] and [`measurement`]: pilot design and the aggregated
//!   per-subcarrier measurement model.
//! - [`estimators`]: DGMP plus fixed-grid and ideal-angle references.
//! - [`eval`]: NMSE, downlink spectral efficiency and 16-QAM BER.
//! - [`sweep`]: seeded Monte-Carlo sweeps with CSV output.
//! - [`cli`]: the `dgmp` command line front end.

pub mod array;
pub mod channel;
pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod linalg;
pub mod measurement;
pub mod pilots;
pub mod seeds;
pub mod sweep;

pub use config::SystemConfig;
pub use error::{Error, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix (column-major).
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
