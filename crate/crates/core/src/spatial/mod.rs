//! DoA estimation, speaker-array distance provision, geometry calibration
//! and frame-wise speaker localization.

mod calibrate;
mod distance;
mod doa;
mod localize;

pub use calibrate::{calibrate_geometry, ArrayPlacement, NetworkGeometry};
pub use distance::{ConstantBiasDistance, DistanceProvider, OracleDistance};
pub use doa::{estimate_doa, DoaEstimate};
pub use localize::{collect_observations, localize_frame, localized_series, LocalObservation};
