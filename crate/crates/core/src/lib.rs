//! Simulation and optimization of a Gaussian-modulated CV-QKD transceiver
//! under finite filter lengths, finite converter resolution and finite
//! analog bandwidth.
//!
//! The chain (symbols → upsample → Tx FIR → DAC → LPF → fiber loss → ADC →
//! Rx FIR → downsample) is simulated semiclassically in [`link`]. Its
//! output feeds the asymptotic key-rate formula in [`key_rate`], and the
//! [`optimizer`] tunes the Tx/Rx taps and mean photon number with a
//! score-function (REINFORCE) estimator that only ever sees rewards.
//!
//! Amplitudes are carried in root-photon units: a transmitted symbol `x`
//! has `E|x|^2` equal to the mean photon number.

pub mod dsp;
pub mod error;
pub mod experiments;
pub mod key_rate;
pub mod link;
pub mod optimizer;
pub mod quantization;
pub mod seed;

pub use error::{Error, Result};

/// Version string stamped into run records and manifests.
pub const ARTIFACT_VERSION: &str = concat!("cvqkd ", env!("CARGO_PKG_VERSION"));
