//! Frame-wise local observations and global speaker localization.

use crate::config::{SpatialConfig, StftConfig};
use crate::dsp::{energy_vad, Cpx, GccPhat, Stft, Window};
use crate::error::Result;
use crate::simulate::ArrayPose;

use super::calibrate::NetworkGeometry;
use super::distance::DistanceProvider;
use super::doa::estimate_doa;

/// A DoA/distance observation of one array at one frame.
#[derive(Debug, Clone, Copy)]
pub struct LocalObservation {
    pub frame: usize,
    pub array: usize,
    /// Azimuth in the array-local frame (rad).
    pub doa_rad: f64,
    pub distance_m: f64,
    pub confidence: f64,
}

impl LocalObservation {
    /// Position in the array-local frame.
    pub fn local_position(&self) -> [f64; 2] {
        [
            self.distance_m * self.doa_rad.cos(),
            self.distance_m * self.doa_rad.sin(),
        ]
    }
}

/// Extract per-frame observations for one array from its synchronized
/// channels: energy VAD on the reference channel, steered-response azimuth
/// over all microphone pairs, and a distance from the provider.
///
/// `eligible` optionally restricts frames further (e.g. to single-speaker
/// frames identified during synchronization).
#[allow(clippy::too_many_arguments)]
pub fn collect_observations(
    array: usize,
    channels: &[Vec<f64>],
    provider: &dyn DistanceProvider,
    eligible: Option<&[bool]>,
    cfg: &SpatialConfig,
    stft_cfg: &StftConfig,
    array_edge_m: f64,
    sample_rate: f64,
) -> Result<Vec<LocalObservation>> {
    let engine = Stft::new(stft_cfg.frame_size, stft_cfg.frame_shift, Window::SqrtHann);
    let spec = engine.forward_multi(channels, sample_rate)?;
    let vad = energy_vad(
        &channels[0],
        stft_cfg.frame_size,
        stft_cfg.frame_shift,
        cfg.vad_threshold_db,
    );
    let layout = ArrayPose {
        position: [0.0, 0.0],
        orientation: 0.0,
    }
    .mic_positions(channels.len(), array_edge_m);
    let mut gcc = GccPhat::new(stft_cfg.frame_size, 4);

    let mut out = Vec::new();
    for l in 0..spec.frames {
        if !vad[l] {
            continue;
        }
        if let Some(mask) = eligible {
            if l >= mask.len() || !mask[l] {
                continue;
            }
        }
        let spectra: Vec<&[Cpx]> = (0..channels.len()).map(|m| spec.frame(m, l)).collect();
        let doa = estimate_doa(&spectra, &layout, &mut gcc, cfg.doa_grid_deg, sample_rate);
        if doa.confidence < cfg.doa_confidence_threshold {
            continue;
        }
        let time_s = (l * stft_cfg.frame_shift + stft_cfg.frame_size / 2) as f64 / sample_rate;
        let Some(distance) = provider.distance(time_s, array) else {
            continue;
        };
        if !(0.0..30.0).contains(&distance) {
            continue;
        }
        out.push(LocalObservation {
            frame: l,
            array,
            doa_rad: doa.azimuth_rad,
            distance_m: distance,
            confidence: doa.confidence,
        });
    }
    Ok(out)
}

/// Fuse one frame's observations into a global position estimate: each
/// array's local position is mapped to the global frame and the
/// component-wise median is taken.
pub fn localize_frame(
    observations: &[&LocalObservation],
    geometry: &NetworkGeometry,
) -> Option<[f64; 2]> {
    if observations.is_empty() {
        return None;
    }
    let mut xs = Vec::with_capacity(observations.len());
    let mut ys = Vec::with_capacity(observations.len());
    for obs in observations {
        let g = geometry.arrays[obs.array].to_global(obs.local_position());
        xs.push(g[0]);
        ys.push(g[1]);
    }
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    Some([median_sorted(&xs), median_sorted(&ys)])
}

/// Per-frame fused positions over a whole meeting.
pub fn localized_series(
    observations: &[LocalObservation],
    geometry: &NetworkGeometry,
    frames: usize,
) -> Vec<Option<[f64; 2]>> {
    let mut by_frame: Vec<Vec<&LocalObservation>> = vec![Vec::new(); frames];
    for obs in observations {
        if obs.frame < frames {
            by_frame[obs.frame].push(obs);
        }
    }
    by_frame
        .iter()
        .map(|list| localize_frame(list, geometry))
        .collect()
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::ArrayPlacement;

    fn geometry() -> NetworkGeometry {
        NetworkGeometry {
            arrays: vec![
                ArrayPlacement::identity(),
                ArrayPlacement {
                    position: [2.0, 0.0],
                    orientation: std::f64::consts::FRAC_PI_2,
                },
            ],
            speakers: vec![[1.0, 1.0]],
        }
    }

    fn obs(array: usize, doa_rad: f64, distance_m: f64) -> LocalObservation {
        LocalObservation {
            frame: 0,
            array,
            doa_rad,
            distance_m,
            confidence: 1.0,
        }
    }

    #[test]
    fn identical_estimates_pass_through() {
        let geo = geometry();
        // Both arrays see the speaker at [1, 1].
        let a = obs(0, (1.0f64).atan2(1.0), 2f64.sqrt());
        // Array 1 at [2,0] rotated 90 deg: local position of [1,1] is
        // R(-90) * [-1, 1] = [1, 1].
        let b = obs(1, (1.0f64).atan2(1.0), 2f64.sqrt());
        let p = localize_frame(&[&a, &b], &geo).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-9 && (p[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn median_ignores_one_outlier_direction() {
        let geo = NetworkGeometry {
            arrays: vec![ArrayPlacement::identity(); 3],
            speakers: vec![],
        };
        let a = obs(0, 0.0, 1.0);
        let b = obs(1, 0.0, 1.02);
        let outlier = obs(2, 0.0, 2.0);
        let p = localize_frame(&[&a, &b, &outlier], &geo).unwrap();
        assert!(p[0] >= 1.0 && p[0] <= 1.02, "x {}", p[0]);
    }

    #[test]
    fn permutation_invariant() {
        let geo = geometry();
        let a = obs(0, 0.3, 1.5);
        let b = obs(1, 1.2, 2.5);
        let p1 = localize_frame(&[&a, &b], &geo).unwrap();
        let p2 = localize_frame(&[&b, &a], &geo).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn empty_frame_yields_none() {
        assert!(localize_frame(&[], &geometry()).is_none());
    }
}
