//! Speaker-array distance provision.
//!
//! The learned distance estimator is deliberately out of scope; distances
//! enter through this pluggable interface instead. The oracle provider adds
//! multiplicative log-normal noise to the simulator's ground truth.

use crate::simulate::{GroundTruth, Scenario};

/// Source of frame-wise speaker-array distances (to the array's reference
/// microphone, matching the channel used for TDOA estimates).
pub trait DistanceProvider {
    /// Distance in meters for the given time, or `None` when the provider
    /// has no estimate (e.g. nobody speaks).
    fn distance(&self, time_s: f64, array: usize) -> Option<f64>;
}

/// Ground-truth distances with multiplicative log-normal noise.
///
/// The noise is derived from a counter hash of (seed, frame, array) so the
/// provider is deterministic and call-order independent.
pub struct OracleDistance<'a> {
    scenario: &'a Scenario,
    truth: &'a GroundTruth,
    sigma: f64,
    seed: u64,
}

impl<'a> OracleDistance<'a> {
    pub fn new(scenario: &'a Scenario, truth: &'a GroundTruth, sigma: f64, seed: u64) -> Self {
        Self {
            scenario,
            truth,
            sigma,
            seed,
        }
    }

    /// The speaker that dominates a frame: the single active one, or among
    /// several the lowest index (overlap frames are filtered out upstream by
    /// confidence gating anyway).
    fn dominant_speaker(&self, frame: usize) -> Option<usize> {
        let active: Vec<usize> = self
            .truth
            .activity
            .iter()
            .enumerate()
            .filter(|(_, a)| frame < a.len() && a[frame])
            .map(|(i, _)| i)
            .collect();
        active.first().copied()
    }
}

impl DistanceProvider for OracleDistance<'_> {
    fn distance(&self, time_s: f64, array: usize) -> Option<f64> {
        let frame = (time_s * self.scenario.sample_rate as f64
            / self.truth.activity_frame_shift as f64) as usize;
        let speaker = self.dominant_speaker(frame)?;
        let mic = self.scenario.mic_positions(array)[0];
        let sp = self.scenario.speakers[speaker];
        let d = ((sp[0] - mic[0]).powi(2) + (sp[1] - mic[1]).powi(2)).sqrt();
        let z = hash_normal(self.seed, frame as u64, array as u64);
        Some(d * (self.sigma * z).exp())
    }
}

/// A provider that scales the oracle distance by a fixed factor; used to
/// probe bias sensitivity in tests.
pub struct ConstantBiasDistance<'a> {
    pub inner: OracleDistance<'a>,
    pub factor: f64,
}

impl DistanceProvider for ConstantBiasDistance<'_> {
    fn distance(&self, time_s: f64, array: usize) -> Option<f64> {
        self.inner.distance(time_s, array).map(|d| d * self.factor)
    }
}

/// Standard normal draw from a splitmix64-style hash; deterministic in its
/// inputs.
fn hash_normal(seed: u64, a: u64, b: u64) -> f64 {
    let mut x = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    let mut next = || {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    let u1 = (next() >> 11) as f64 / (1u64 << 53) as f64;
    let u2 = (next() >> 11) as f64 / (1u64 << 53) as f64;
    let u1 = u1.max(1e-300);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimulateConfig;
    use crate::simulate::{render_meeting, sample_scenario, SpeechShapedNoiseSource};

    fn fixture() -> (Scenario, GroundTruth) {
        let cfg = SimulateConfig {
            duration_s: 8.0,
            ..SimulateConfig::default()
        };
        let scenario = sample_scenario(21, &cfg).unwrap();
        let mut source = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let (_, truth) = render_meeting(&scenario, &mut source, &cfg).unwrap();
        (scenario, truth)
    }

    #[test]
    fn zero_sigma_returns_exact_distance() {
        let (scenario, truth) = fixture();
        let provider = OracleDistance::new(&scenario, &truth, 0.0, 1);
        for frame in 0..truth.activity[0].len() {
            let t = frame as f64 * truth.activity_frame_shift as f64
                / scenario.sample_rate as f64;
            if let Some(d) = provider.distance(t, 1) {
                let active: Vec<usize> = (0..scenario.speakers.len())
                    .filter(|&i| truth.activity[i][frame])
                    .collect();
                let sp = scenario.speakers[active[0]];
                let mic = scenario.mic_positions(1)[0];
                let want = ((sp[0] - mic[0]).powi(2) + (sp[1] - mic[1]).powi(2)).sqrt();
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relative_error_tracks_sigma() {
        let (scenario, truth) = fixture();
        let sigma = 0.1;
        let noisy = OracleDistance::new(&scenario, &truth, sigma, 2);
        let clean = OracleDistance::new(&scenario, &truth, 0.0, 2);
        let mut errs = Vec::new();
        for i in 0..10_000 {
            let t = (i % truth.activity[0].len()) as f64 * truth.activity_frame_shift as f64
                / scenario.sample_rate as f64;
            let array = i % 3;
            if let (Some(n), Some(c)) = (noisy.distance(t, array), clean.distance(t, array)) {
                errs.push(n / c - 1.0);
            }
        }
        assert!(errs.len() > 1000);
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let std =
            (errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / errs.len() as f64).sqrt();
        assert!(
            (std - sigma).abs() / sigma < 0.2,
            "std {std} for sigma {sigma}"
        );
    }

    #[test]
    fn provider_is_deterministic() {
        let (scenario, truth) = fixture();
        let p = OracleDistance::new(&scenario, &truth, 0.1, 3);
        assert_eq!(p.distance(1.0, 2), p.distance(1.0, 2));
    }
}
