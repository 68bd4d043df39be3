//! Front-end processing for meetings recorded by an ad-hoc network of
//! unsynchronized microphone arrays.
//!
//! The crate covers the full chain from scenario simulation to evaluation:
//!
//! * [`simulate`] — scenario sampling, image-method reverberation, meeting
//!   composition and injection of sampling-rate/sampling-time offsets.
//! * [`sync`] — coarse alignment, SRO estimation and compensation, and
//!   physically correct STO estimation so that inter-array time differences
//!   keep their geometric meaning.
//! * [`spatial`] — per-array DoA estimation, speaker/array distance
//!   provision, geometry calibration and frame-wise speaker localization.
//! * [`diarize`] — position-based single-speaker tracking, SRP-PhaT overlap
//!   detection and temporal smoothing into a speaker diary.
//! * [`mixmodel`] — a complex angular central Gaussian mixture model with
//!   diary-informed initialization, segmentation and mask-based MVDR
//!   beamforming.
//! * [`evaluate`] — DER with collar, synchronization error and SI-SDR.
//! * [`pipeline`] — orchestration of the above into reproducible runs.

pub mod cluster;
pub mod config;
pub mod diarize;
pub mod dsp;
pub mod error;
pub mod evaluate;
pub mod mixmodel;
pub mod pipeline;
pub mod simulate;
pub mod spatial;
pub mod sync;

pub use config::PipelineConfig;
pub use error::{Error, Result};

/// Speed of sound in m/s used throughout geometry and localization.
pub const SPEED_OF_SOUND: f64 = 343.0;
