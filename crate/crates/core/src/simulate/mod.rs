//! Meeting scenario simulation: constraint-based placement sampling,
//! image-method reverberation, meeting composition with overlap statistics,
//! sensor noise and clock asynchrony injection.

mod compose;
mod render;
mod rir;
mod scenario;

pub use compose::{
    Composition, DirUtteranceSource, PlacedUtterance, SpeechShapedNoiseSource, UtteranceSource,
};
pub use render::{
    render_meeting, ActivityFractions, ArrayRecording, AsyncRecordingSet, GroundTruth, TrueClock,
    UtteranceInfo,
};
pub use rir::{image_method_rir, sabine_t60_floor, RoomReverb};
pub use scenario::{sample_scenario, validate_scenario, ArrayPose, Scenario, SRO_TRACE_SHIFT};
