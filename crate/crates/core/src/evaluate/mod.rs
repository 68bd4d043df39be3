//! Metrics: diarization error rate with collar, synchronization error, and
//! scale-invariant SDR.

mod der;
mod report;
mod sisdr;
mod sync_error;

pub use der::{der, der_frame_oracle, DerResult};
pub use report::{MeetingMetrics, MetricsTable, SummaryRow};
pub use sisdr::si_sdr;
pub use sync_error::{sync_error, SyncErrorReport};
