//! Spatial diarization: position-based single-speaker tracking, SRP-PhaT
//! overlap detection on per-speaker grids, and temporal smoothing.

mod diary;
mod overlap;
mod srp;
mod track;

pub use diary::{parse_rttm, segments_to_rttm, Diary, SpeakerSegment};
pub use overlap::detect_overlap;
pub use srp::{srp_phat_power, SrpGrid};
pub use track::track_single;
