//! Eight-microphone binaural two-talker separation.
//!
//! The crate covers the whole pipeline: STFT framing, parametric scene
//! synthesis, an ear-conditioned complex-spectrum separation network with
//! its own reverse-mode autodiff, SI-SDR/STOI scoring, and the training loop.

pub mod checkpoint;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scene;
pub mod signal;
pub mod train;
pub mod wav;

pub use error::{Error, Result};
