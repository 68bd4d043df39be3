//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the processing and simulation modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Signal too short for the requested framing.
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    /// Sampling rate offset outside the supported range.
    #[error("SRO out of supported range: {ppm} ppm (|SRO| must be <= {max} ppm)")]
    SroOutOfRange { ppm: f64, max: f64 },

    /// STO estimation received no input pairs.
    #[error("no observations")]
    NoObservations,

    /// STO estimation received only low-confidence pairs.
    #[error("no reliable observations")]
    NoReliableObservations,

    /// Geometry calibration has too few usable speaker clusters.
    #[error("under-determined calibration: {0} usable speaker clusters, need at least 3")]
    UnderDeterminedCalibration(usize),

    /// Speaker positions are (near-)collinear; orientation is not observable.
    #[error("degenerate configuration: speaker positions are collinear")]
    DegenerateConfiguration,

    /// Clock estimate and recording set disagree on array ids.
    #[error("array id mismatch: {0}")]
    ArrayIdMismatch(String),

    /// Geometry missing where required.
    #[error("missing geometry: {0}")]
    MissingGeometry(String),

    /// The DER scorer has no reference speech to score.
    #[error("nothing to score: reference diary is empty")]
    NothingToScore,

    /// SI-SDR reference is identically zero.
    #[error("zero reference signal")]
    ZeroReference,

    /// Scenario sampling failed to satisfy the placement constraints.
    #[error("scenario constraints unsatisfiable after {attempts} attempts (seed {seed})")]
    ConstraintsUnsatisfiable { attempts: usize, seed: u64 },

    /// Requested reverberation time is not reachable in the given room.
    #[error("T60 of {t60} s infeasible for room (Sabine absorption {alpha:.3} > 1)")]
    InfeasibleT60 { t60: f64, alpha: f64 },

    /// Meeting composition ran out of source material.
    #[error("insufficient utterance material: {0}")]
    InsufficientMaterial(String),

    /// Mismatched inputs (lengths, meeting sets, ...).
    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Wave file I/O.
    #[error("audio io: {0}")]
    AudioIo(#[from] hound::Error),

    /// Generic I/O.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization.
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// A pipeline stage failed; carries the stage name.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
