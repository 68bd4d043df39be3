//! Shared signal primitives: STFT/iSTFT, GCC-PhaT, STFT-domain resampling
//! and an energy VAD.

mod gcc;
mod resample;
mod stft;
mod vad;

pub use gcc::{CorrelationFunction, GccPhat};
pub use resample::{resample_with_offset, stft_resample, SroTrace};
pub use stft::{istft, stft, Spectrogram, Stft, Window};
pub use vad::energy_vad;

/// Complex sample type used by all spectral processing.
pub type Cpx = realfft::num_complex::Complex<f64>;
