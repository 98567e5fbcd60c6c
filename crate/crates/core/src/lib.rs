//! OFDM radar simulation and Tx/Rx IQ imbalance compensation for joint
//! communication and sensing.
//!
//! The crate models the full signal chain of a JCAS-capable transceiver:
//! a 5G-NR-style OFDM waveform is sent over a multi-reflector radar channel
//! (including the Tx/Rx leakage path), frequency-independent IQ imbalance is
//! applied in both the transmit and receive paths, and the zero-forcing
//! channel estimate is processed into a range-Doppler map. The imbalance
//! parameters are then recovered with mixed complex-/real-valued bilinear
//! adaptive filters (LMS, NLMS, RLS, alternating and iterative Wiener) and
//! undone by the compensation chain, restoring the sensing dynamic range.
//!
//! Module map:
//! - [`ofdm`] — resource grids, QAM fill, (de)modulation, conjugate-mirror
//! - [`channel`] — reflector scenarios, channel synthesis, AWGN
//! - [`imbalance`] — FID IQ imbalance model, ISR, EVM
//! - [`radar`] — zero forcing, range-Doppler maps, CFAR, RELAX
//! - [`bilinear`] — the bilinear system, the five estimators, op accounting
//! - [`compensation`] — Tx forward / Rx inverse correction and channel recovery
//! - [`metrics`] — SFDR, amplitude MSE, averaged amplitude/phase errors

pub mod bilinear;
pub mod channel;
pub mod compensation;
pub mod error;
pub mod imbalance;
pub mod metrics;
pub mod ofdm;
pub mod radar;
pub mod rng;

pub use error::SimError;

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, SimError>;
