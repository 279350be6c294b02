//! Numerical laboratory for a polarization-reconfigurable MISO downlink.
//!
//! A gNB with `n_t` polarization-reconfigurable antennas serves a single-antenna
//! UE through a depolarized 2x2-block channel. Both sides pick their polarization
//! angles and the gNB picks a beamformer from noisy pilot observations. The crate
//! provides:
//!
//! - the channel, effective-channel, and beamforming-gain model ([`channel`])
//! - the double-side pilot protocol with recorded randomization ([`pilots`])
//! - least-squares and perfect-CSI baselines ([`baselines`])
//! - two small MLPs trained unsupervised, with in-crate reverse-mode
//!   gradients, to map pilots directly to a configuration ([`neural`])
//! - seed-portable RNG streams and min-norm least squares ([`rng`], [`numerics`])

pub mod baselines;
pub mod channel;
pub mod error;
pub mod neural;
pub mod numerics;
pub mod pilots;
pub mod rng;

pub use error::{Error, Result};
