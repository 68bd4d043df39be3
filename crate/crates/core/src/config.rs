//! Declarative configuration for every stage of the pipeline.
//!
//! All tunables live here with their defaults so that a run is fully
//! described by one config file plus a seed. Unknown keys are rejected
//! during deserialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// STFT framing parameters shared by the analysis front-ends.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    /// Analysis frame length in samples.
    pub frame_size: usize,
    /// Analysis frame shift in samples.
    pub frame_shift: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        // Square-root Hann at 1024/256 and 16 kHz: COLA-compliant and about
        // 64 ms per frame, a good fit for GCC-PhaT at table-scale apertures.
        Self {
            frame_size: 1024,
            frame_shift: 256,
        }
    }
}

/// Synchronization stage parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncConfig {
    /// Length of the leading signal section used for coarse alignment (s).
    pub coarse_window_s: f64,
    /// SRO estimator probe length in samples.
    pub sro_probe_len: usize,
    /// SRO estimator probe shift in samples.
    pub sro_probe_shift: usize,
    /// Recursive smoothing factor for the coherence-drift average.
    pub sro_smoothing: f64,
    /// Frame length for TDOA/TDOF pair collection (samples).
    pub sto_frame_size: usize,
    /// Frame shift for TDOA/TDOF pair collection (samples).
    pub sto_frame_shift: usize,
    /// Maximum GCC-PhaT lag for pair collection (samples).
    pub sto_max_lag: usize,
    /// Pairs with a GCC peak below this value are discarded.
    pub confidence_threshold: f64,
    /// Agglomerative threshold for TDOA clustering (s).
    pub tau_cluster_threshold_s: f64,
    /// Agglomerative threshold for TDOF clustering (s).
    pub delta_cluster_threshold_s: f64,
    /// Agglomerative threshold for STO candidate clustering (s).
    pub sto_cluster_threshold_s: f64,
    /// Energy VAD threshold above the noise floor (dB) for pair gating.
    pub vad_threshold_db: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            coarse_window_s: 20.0,
            sro_probe_len: 8192,
            sro_probe_shift: 2048,
            sro_smoothing: 0.95,
            sto_frame_size: 4096,
            sto_frame_shift: 2048,
            sto_max_lag: 1024,
            confidence_threshold: 0.15,
            tau_cluster_threshold_s: 0.5e-3,
            delta_cluster_threshold_s: 1.0e-3,
            sto_cluster_threshold_s: 2.0e-3,
            vad_threshold_db: 8.0,
        }
    }
}

/// Spatial stage (DoA, distances, geometry calibration) parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpatialConfig {
    /// Azimuth scan resolution in degrees.
    pub doa_grid_deg: f64,
    /// Frames with DoA confidence below this value emit no observation.
    pub doa_confidence_threshold: f64,
    /// Relative sigma of the log-normal noise of the oracle distance provider.
    pub distance_noise_sigma: f64,
    /// Merge threshold for speaker position clustering (m).
    pub speaker_cluster_threshold_m: f64,
    /// Calibration stops when no global point moves more than this (m).
    pub calibration_tolerance_m: f64,
    /// Maximum calibration iterations.
    pub calibration_max_iters: usize,
    /// Minimum frames per speaker cluster used for calibration.
    pub min_cluster_frames: usize,
    /// Energy VAD threshold (dB) for observation gating.
    pub vad_threshold_db: f64,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            doa_grid_deg: 1.0,
            doa_confidence_threshold: 0.3,
            distance_noise_sigma: 0.1,
            speaker_cluster_threshold_m: 0.5,
            calibration_tolerance_m: 1e-3,
            calibration_max_iters: 50,
            min_cluster_frames: 20,
            vad_threshold_db: 8.0,
        }
    }
}

/// Diarization stage parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiarizeConfig {
    /// A frame is attributed to a speaker only within this radius (m).
    pub track_radius_m: f64,
    /// Grid edge length in points for SRP-PhaT refinement.
    pub srp_grid_points: usize,
    /// Grid spacing (m); 4 cm is roughly 2 samples at 16 kHz.
    pub srp_grid_spacing_m: f64,
    /// A speaker is added if its power exceeds this fraction of the frame max.
    pub overlap_threshold: f64,
    /// Absolute SRP power floor; frames below it never add speakers.
    pub power_floor: f64,
    /// Use all microphone pairs (true) or only first channels per array.
    pub srp_all_pairs: bool,
    /// Gaps shorter than this are closed during smoothing (s).
    pub min_gap_s: f64,
    /// Activity islands shorter than this are removed during smoothing (s).
    pub min_on_s: f64,
    /// Energy VAD threshold (dB) for tracking.
    pub vad_threshold_db: f64,
}

impl Default for DiarizeConfig {
    fn default() -> Self {
        Self {
            track_radius_m: 0.5,
            srp_grid_points: 5,
            srp_grid_spacing_m: 0.04,
            overlap_threshold: 0.5,
            power_floor: 0.05,
            srp_all_pairs: true,
            min_gap_s: 0.2,
            min_on_s: 0.3,
            vad_threshold_db: 8.0,
        }
    }
}

/// Mixture model and beamforming parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixModelConfig {
    /// Maximum EM iterations.
    pub em_iterations: usize,
    /// Stop early when the per-observation log-likelihood gain drops below this.
    pub em_early_stop: f64,
    /// Floor added to speaker activities before prior normalization.
    pub activity_floor: f64,
    /// Dirichlet concentration for the uninformed initialization.
    pub dirichlet_alpha: f64,
    /// Ridge added to ill-conditioned shape matrices (fraction of trace).
    pub shape_ridge: f64,
    /// Moving-average window for prior smoothing before segmentation (s).
    pub segment_smoothing_s: f64,
    /// Minimum segment duration (s).
    pub min_segment_s: f64,
    /// Diagonal loading for the distortion covariance (fraction of trace).
    pub diagonal_loading: f64,
}

impl Default for MixModelConfig {
    fn default() -> Self {
        Self {
            em_iterations: 20,
            em_early_stop: 1e-4,
            activity_floor: 1e-2,
            dirichlet_alpha: 1.0,
            shape_ridge: 1e-6,
            segment_smoothing_s: 0.4,
            min_segment_s: 0.3,
            diagonal_loading: 1e-6,
        }
    }
}

/// Scenario and meeting simulation parameters. Defaults follow the
/// conference-table setup: three square 4-microphone arrays on a table,
/// three to six speakers around it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Nominal sampling rate (Hz).
    pub sample_rate: u32,
    /// Meeting duration (s).
    pub duration_s: f64,
    /// Number of meetings in a run.
    pub num_meetings: usize,
    /// Room side length bounds (m).
    pub room_min_m: f64,
    pub room_max_m: f64,
    /// Room height (m).
    pub room_height_m: f64,
    /// Table side length bounds (m).
    pub table_min_m: f64,
    pub table_max_m: f64,
    /// Reverberation time bounds (s).
    pub t60_min_s: f64,
    pub t60_max_s: f64,
    /// Sensor SNR bounds (dB).
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    /// Sampling time offset bounds (s).
    pub sto_min_s: f64,
    pub sto_max_s: f64,
    /// Mean SRO bounds (ppm).
    pub sro_min_ppm: f64,
    pub sro_max_ppm: f64,
    /// Random-walk rate of the time-varying SRO (ppm per second).
    pub sro_walk_ppm_per_s: f64,
    /// Random-walk deviation clip around the mean SRO (ppm).
    pub sro_walk_clip_ppm: f64,
    /// Speaker count bounds (inclusive).
    pub speakers_min: usize,
    pub speakers_max: usize,
    /// Number of arrays.
    pub num_arrays: usize,
    /// Microphones per array (square layout).
    pub mics_per_array: usize,
    /// Array square edge length (m).
    pub array_edge_m: f64,
    /// Plane height of speakers and arrays (m).
    pub plane_height_m: f64,
    /// Target single-speaker fraction of the meeting duration.
    pub single_fraction: f64,
    /// Target two-speaker overlap fraction.
    pub overlap_fraction: f64,
    /// Tolerated absolute deviation of the realized fractions.
    pub fraction_tolerance: f64,
    /// Optional directory with per-speaker utterance WAVs; synthetic speech-
    /// shaped bursts are generated when unset.
    pub utterance_dir: Option<String>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            duration_s: 60.0,
            num_meetings: 10,
            room_min_m: 5.0,
            room_max_m: 7.0,
            room_height_m: 3.0,
            table_min_m: 1.5,
            table_max_m: 3.0,
            t60_min_s: 0.2,
            t60_max_s: 0.5,
            snr_min_db: 20.0,
            snr_max_db: 30.0,
            sto_min_s: 0.0,
            sto_max_s: 2.0,
            sro_min_ppm: -100.0,
            sro_max_ppm: 100.0,
            sro_walk_ppm_per_s: 0.5,
            sro_walk_clip_ppm: 20.0,
            speakers_min: 3,
            speakers_max: 6,
            num_arrays: 3,
            mics_per_array: 4,
            array_edge_m: 0.05,
            plane_height_m: 1.6,
            single_fraction: 0.66,
            overlap_fraction: 0.21,
            fraction_tolerance: 0.05,
            utterance_dir: None,
        }
    }
}

/// Evaluation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Collar applied around reference segment boundaries (s).
    pub der_collar_s: f64,
    /// SI-SDR cap for (near-)exact estimates (dB).
    pub si_sdr_cap_db: f64,
    /// Burn-in excluded from SRO error statistics (s).
    pub sro_burn_in_s: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            der_collar_s: 0.25,
            si_sdr_cap_db: 60.0,
            sro_burn_in_s: 10.0,
        }
    }
}

/// Synchronization mode of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyncMode {
    /// Full estimation: coarse + SRO + STO.
    Estimated,
    /// Coarse cross-correlation alignment only.
    CoarseOnly,
    /// Ground-truth clock parameters.
    Oracle,
}

/// Mixture model initialization of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Diary-informed priors from the estimated diarization.
    Informed,
    /// Random Dirichlet posteriors.
    Dirichlet,
    /// Diary-informed priors from the ground-truth activity.
    OracleDiary,
}

/// Array selection of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "index")]
pub enum ArrayMode {
    /// All arrays, synchronized and stacked.
    Multi,
    /// A single compact array (0-based index); no synchronization needed.
    Single(usize),
}

/// Top-level pipeline configuration: stage toggles plus module parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Base seed; every meeting derives its own sub-seed from it.
    pub seed: u64,
    /// Synchronization mode.
    pub sync: SyncMode,
    /// Mixture model initialization mode.
    pub init: InitMode,
    /// Array selection.
    pub arrays: ArrayMode,
    /// Skip mixture model and beamforming (diarization metrics only).
    pub skip_separation: bool,
    pub stft: StftConfig,
    pub sync_params: SyncConfig,
    pub spatial: SpatialConfig,
    pub diarize: DiarizeConfig,
    pub mixmodel: MixModelConfig,
    pub simulate: SimulateConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sync: SyncMode::Estimated,
            init: InitMode::Informed,
            arrays: ArrayMode::Multi,
            skip_separation: false,
            stft: StftConfig::default(),
            sync_params: SyncConfig::default(),
            spatial: SpatialConfig::default(),
            diarize: DiarizeConfig::default(),
            mixmodel: MixModelConfig::default(),
            simulate: SimulateConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// The `desk` preset: ten 60 s meetings with default noise, estimated
    /// synchronization and informed initialization.
    pub fn desk_preset() -> Self {
        Self::default()
    }

    /// Validate cross-field constraints that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let stft = &self.stft;
        if stft.frame_shift == 0 || stft.frame_shift > stft.frame_size {
            return Err(Error::InvalidConfig(format!(
                "frame_shift {} must be in 1..=frame_size {}",
                stft.frame_shift, stft.frame_size
            )));
        }
        if self.sync_params.sto_max_lag * 2 >= self.sync_params.sto_frame_size {
            return Err(Error::InvalidConfig(
                "sto_max_lag must be below half the STO frame size".into(),
            ));
        }
        if let ArrayMode::Single(j) = self.arrays {
            if j >= self.simulate.num_arrays {
                return Err(Error::InvalidConfig(format!(
                    "single-array index {j} out of range (have {})",
                    self.simulate.num_arrays
                )));
            }
        }
        let s = &self.simulate;
        if s.speakers_min < 1 || s.speakers_min > s.speakers_max {
            return Err(Error::InvalidConfig("invalid speaker count bounds".into()));
        }
        if s.single_fraction + s.overlap_fraction >= 1.0 {
            return Err(Error::InvalidConfig(
                "single + overlap fractions must leave room for silence".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = serde_json::from_str::<PipelineConfig>(r#"{"sedd": 3}"#).unwrap_err();
        assert!(err.to_string().contains("sedd"), "{err}");
    }

    #[test]
    fn rejects_bad_frame_shift() {
        let mut cfg = PipelineConfig::default();
        cfg.stft.frame_shift = 2048;
        assert!(cfg.validate().is_err());
    }
}
