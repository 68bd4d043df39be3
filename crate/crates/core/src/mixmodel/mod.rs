//! Spatial mixture model separation: a complex angular central Gaussian
//! mixture per frequency bin with shared time-varying priors, initialized
//! from the diary, segmented, and turned into waveforms with mask-driven
//! MVDR beamforming.

mod beamform;
mod cacgmm;
mod cmat;
mod segment;

pub use beamform::beamform;
pub use cacgmm::{em_fit, MixtureState, Observations};
pub use cmat::CMat;
pub use segment::{segment, Segment};
