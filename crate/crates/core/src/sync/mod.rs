//! Signal synchronization across arrays: coarse alignment, SRO estimation
//! and compensation, and physically correct STO estimation.
//!
//! The recording start offset (STO) and the acoustic time of flight both
//! shift cross-array correlations. Compensating only the STO keeps the
//! time differences of flight intact, so the synchronized signals still
//! carry usable spatial information.

mod align;
mod coarse;
mod sro;
mod sto;

pub use align::{estimate_clock, oracle_clock, synchronize, ClockEstimate, SyncReport};
pub use coarse::{advance as advance_signal, coarse_sync, CoarseAlignment};
pub use sro::{estimate_sro, SroEstimate};
pub use sto::{collect_pairs, estimate_sto, StoEstimate, TdoaTdofPair};
