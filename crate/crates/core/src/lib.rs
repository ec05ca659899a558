//! Sparse variable step-size NLMS estimators for MIMO channel estimation.
//!
//! The crate is split along the signal chain:
//!
//! * [`estimators`] holds the per-antenna adaptive update rules (ISS/VSS NLMS
//!   with optional zero-attracting or reweighted zero-attracting penalties).
//! * [`channel`] draws sparse multipath MIMO channels, drives the transmit
//!   tap-delay lines and produces noisy observations.
//! * [`experiment`] runs the round-robin adaptation loop and seeded
//!   Monte-Carlo averaging of the estimation MSE.
//! * [`comms`] simulates a cyclic-prefix OFDM link with QAM/PSK data and
//!   zero-forcing detection on top of an estimated channel.
//!
//! All arithmetic is done on [`Scalar`] (a complex double). Real-mode runs keep
//! every imaginary part at exactly zero, in which case the update rules reduce
//! to their literal real-valued form.

pub mod channel;
pub mod comms;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod seed;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

use serde::{Deserialize, Serialize};

/// Element type of every signal and coefficient vector.
pub type Scalar = num_complex::Complex64;

/// Signal field used by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SignalMode {
    /// Real-valued taps, training and noise; imaginary parts stay zero.
    Real,
    /// Circularly-symmetric complex baseband.
    #[default]
    Complex,
}

impl SignalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalMode::Real => "real",
            SignalMode::Complex => "complex",
        }
    }
}

impl std::str::FromStr for SignalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "real" => Ok(SignalMode::Real),
            "complex" => Ok(SignalMode::Complex),
            other => Err(Error::invalid(format!("unknown signal mode `{other}` (expected real|complex)"))),
        }
    }
}
