//! Clock estimation per array and signal alignment.

use serde::{Deserialize, Serialize};

use crate::config::SyncConfig;
use crate::dsp::{resample_with_offset, SroTrace};
use crate::error::{Error, Result};
use crate::simulate::{ArrayRecording, AsyncRecordingSet, TrueClock, SRO_TRACE_SHIFT};
use crate::spatial::DistanceProvider;

use super::coarse::{advance, coarse_sync};
use super::sro::estimate_sro;
use super::sto::{collect_pairs, estimate_sto};

/// Estimated clock parameters of one array relative to the reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClockEstimate {
    pub array_id: usize,
    /// Coarse cross-correlation lag (samples).
    pub coarse_lag: i64,
    /// SRO estimate in ppm per frame, on the coarsely aligned timeline.
    pub sro_ppm: Vec<f64>,
    /// Frame shift of the SRO grid (samples).
    pub sro_frame_shift: usize,
    /// Total estimated sampling time offset T_j - T_ref (s).
    pub sto_seconds: f64,
    pub weak_coarse: bool,
    pub sro_held: bool,
    /// Candidate-cluster support behind the STO estimate.
    pub sto_support: usize,
}

impl ClockEstimate {
    /// Perfect clock of the reference array.
    pub fn reference(array_id: usize, frames: usize, frame_shift: usize) -> Self {
        Self {
            array_id,
            coarse_lag: 0,
            sro_ppm: vec![0.0; frames],
            sro_frame_shift: frame_shift,
            sto_seconds: 0.0,
            weak_coarse: false,
            sro_held: false,
            sto_support: 0,
        }
    }

    /// STO in samples at the given rate.
    pub fn sto_samples(&self, sample_rate: f64) -> f64 {
        self.sto_seconds * sample_rate
    }

    fn is_identity(&self) -> bool {
        self.coarse_lag == 0
            && self.sto_seconds == 0.0
            && self.sro_ppm.iter().all(|&v| v == 0.0)
    }
}

/// Estimate the full clock of one array: coarse lag, SRO trace, and the
/// physically correct STO from TDOA/TDOF clustering.
pub fn estimate_clock(
    reference: &[f64],
    other: &[f64],
    distances: &dyn DistanceProvider,
    array_id: usize,
    sample_rate: f64,
    cfg: &SyncConfig,
    analysis_frame_shift: usize,
) -> Result<ClockEstimate> {
    let coarse = coarse_sync(reference, other, cfg.coarse_window_s, sample_rate);
    let aligned = advance(other, coarse.lag);
    let sro = estimate_sro(reference, &aligned, cfg, analysis_frame_shift);
    let pairs = collect_pairs(
        reference,
        &aligned,
        &sro,
        distances,
        array_id,
        sample_rate,
        cfg,
    );
    let sto = estimate_sto(&pairs, cfg)?;
    Ok(ClockEstimate {
        array_id,
        coarse_lag: coarse.lag,
        sro_ppm: sro.ppm,
        sro_frame_shift: sro.frame_shift,
        // The clustering sees the residual offset of the aligned streams;
        // undoing the coarse shift gives the physical STO.
        sto_seconds: sto.sto_s - coarse.lag as f64 / sample_rate,
        weak_coarse: coarse.weak,
        sro_held: sro.held,
        sto_support: sto.support,
    })
}

/// Clock estimate carrying ground-truth parameters.
///
/// The coarse lag takes the integer part of the STO, mirroring what the
/// estimator path does, and the SRO trace is re-anchored to the aligned
/// timeline (the first STO-worth of samples never reached the device).
pub fn oracle_clock(truth: &TrueClock, sample_rate: f64) -> ClockEstimate {
    let sto_samples = (truth.sto_s * sample_rate).round() as i64;
    let shift_frames = (sto_samples as usize) / SRO_TRACE_SHIFT;
    // The first STO worth of aligned samples are prepended zeros that never
    // passed the device clock; they must accumulate no drift.
    let ppm: Vec<f64> = (0..truth.sro_ppm.len())
        .map(|l| {
            if l < shift_frames {
                0.0
            } else {
                truth.sro_ppm[(l - shift_frames).min(truth.sro_ppm.len() - 1)]
            }
        })
        .collect();
    ClockEstimate {
        array_id: truth.array_id,
        coarse_lag: -sto_samples,
        sro_ppm: ppm,
        sro_frame_shift: SRO_TRACE_SHIFT,
        sto_seconds: truth.sto_s,
        weak_coarse: false,
        sro_held: false,
        sto_support: 0,
    }
}

/// Align every array onto the reference timeline: advance by the coarse
/// lag, resample away the estimated SRO, and shift by the residual STO.
pub fn synchronize(
    recordings: &AsyncRecordingSet,
    clocks: &[ClockEstimate],
) -> Result<Vec<ArrayRecording>> {
    if recordings.arrays.len() != clocks.len() {
        return Err(Error::ArrayIdMismatch(format!(
            "{} recordings vs {} clock estimates",
            recordings.arrays.len(),
            clocks.len()
        )));
    }
    let fs = recordings.sample_rate;
    let mut out = Vec::with_capacity(recordings.arrays.len());
    for (rec, clock) in recordings.arrays.iter().zip(clocks) {
        if rec.array_id != clock.array_id {
            return Err(Error::ArrayIdMismatch(format!(
                "recording {} vs clock {}",
                rec.array_id, clock.array_id
            )));
        }
        if clock.is_identity() {
            out.push(rec.clone());
            continue;
        }
        let inv_trace =
            SroTrace::per_frame(clock.sro_ppm.clone(), clock.sro_frame_shift).inverse();
        // Remaining shift after the coarse advance; negative delays the
        // stream (zeros are prepended).
        let offset = -(clock.sto_samples(fs) + clock.coarse_lag as f64);
        let channels: Result<Vec<Vec<f64>>> = rec
            .channels
            .iter()
            .map(|ch| {
                let aligned = advance(ch, clock.coarse_lag);
                resample_with_offset(&aligned, &inv_trace, offset)
            })
            .collect();
        out.push(ArrayRecording {
            array_id: rec.array_id,
            channels: channels?,
        });
    }
    Ok(out)
}

/// One line of the synchronization report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyncReport {
    pub array_id: usize,
    pub coarse_lag: i64,
    pub weak_coarse: bool,
    pub sto_seconds: f64,
    pub sro_mean_ppm: f64,
    pub sro_final_ppm: f64,
    pub sro_held: bool,
    pub sto_support: usize,
}

impl SyncReport {
    pub fn from_clock(clock: &ClockEstimate) -> Self {
        let n = clock.sro_ppm.len().max(1);
        Self {
            array_id: clock.array_id,
            coarse_lag: clock.coarse_lag,
            weak_coarse: clock.weak_coarse,
            sto_seconds: clock.sto_seconds,
            sro_mean_ppm: clock.sro_ppm.iter().sum::<f64>() / n as f64,
            sro_final_ppm: clock.sro_ppm.last().copied().unwrap_or(0.0),
            sro_held: clock.sro_held,
            sto_support: clock.sto_support,
        }
    }

    /// Serialize a report set as line-delimited JSON.
    pub fn to_jsonl(reports: &[SyncReport]) -> String {
        reports
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimulateConfig;
    use crate::dsp::{energy_vad, stft, GccPhat, Stft, Window};
    use crate::simulate::{render_meeting, sample_scenario, Scenario, SpeechShapedNoiseSource};

    fn render_pair(
        seed: u64,
        duration_s: f64,
    ) -> (Scenario, AsyncRecordingSet, crate::simulate::GroundTruth, AsyncRecordingSet) {
        let cfg = SimulateConfig {
            duration_s,
            ..SimulateConfig::default()
        };
        let scenario = sample_scenario(seed, &cfg).unwrap();
        let mut source = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let (rec, truth) = render_meeting(&scenario, &mut source, &cfg).unwrap();

        // The same meeting with ideal clocks, for identity comparisons.
        let mut clean_scenario = scenario.clone();
        clean_scenario.sto_s = vec![0.0; scenario.sto_s.len()];
        clean_scenario.sro_ppm = scenario
            .sro_ppm
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        let mut source2 = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let (clean, _) = render_meeting(&clean_scenario, &mut source2, &cfg).unwrap();
        (scenario, rec, truth, clean)
    }

    #[test]
    fn reference_array_passes_through_unchanged() {
        let (_, rec, truth, _) = render_pair(31, 8.0);
        let frames = rec.arrays[0].channels[0].len() / SRO_TRACE_SHIFT;
        let clocks: Vec<ClockEstimate> = truth
            .clocks
            .iter()
            .map(|c| {
                if c.array_id == 0 {
                    ClockEstimate::reference(0, frames, SRO_TRACE_SHIFT)
                } else {
                    oracle_clock(c, rec.sample_rate)
                }
            })
            .collect();
        let synced = synchronize(&rec, &clocks).unwrap();
        assert_eq!(synced[0].channels, rec.arrays[0].channels);
    }

    #[test]
    fn oracle_clocks_invert_the_injection() {
        let (_, rec, truth, clean) = render_pair(32, 10.0);
        let fs = rec.sample_rate;
        let frames = rec.arrays[0].channels[0].len() / SRO_TRACE_SHIFT;
        let clocks: Vec<ClockEstimate> = truth
            .clocks
            .iter()
            .map(|c| {
                if c.array_id == 0 {
                    ClockEstimate::reference(0, frames, SRO_TRACE_SHIFT)
                } else {
                    oracle_clock(c, fs)
                }
            })
            .collect();
        let synced = synchronize(&rec, &clocks).unwrap();

        for j in 1..synced.len() {
            let y = &synced[j].channels[0];
            let x = &clean.arrays[j].channels[0];
            let max_sto = (truth.clocks[j].sto_s * fs) as usize;
            let lo = 16000 + max_sto;
            let hi = y.len() - 16000;
            let rms = (x[lo..hi].iter().map(|v| v * v).sum::<f64>()
                / (hi - lo) as f64)
                .sqrt();
            let err = (x[lo..hi]
                .iter()
                .zip(&y[lo..hi])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / (hi - lo) as f64)
                .sqrt();
            // The residual is dominated by the sensor noise component near
            // Nyquist, which the speech-band resampler does not preserve;
            // what matters is that the content is not misaligned.
            assert!(
                err / rms < 8e-2,
                "array {j}: relative residual {}",
                err / rms
            );
            let mut num = 0.0;
            let mut den = 0.0;
            for n in lo..hi - 1 {
                let d = (x[n + 1] - x[n - 1]) / 2.0;
                num += (y[n] - x[n]) * d;
                den += d * d;
            }
            let misalign = num / den;
            assert!(
                misalign.abs() < 0.05,
                "array {j}: misaligned by {misalign} samples"
            );
        }
    }

    #[test]
    fn post_sync_tdoa_matches_tdof_with_oracle_clocks() {
        let cfg = SimulateConfig {
            duration_s: 10.0,
            speakers_min: 1,
            speakers_max: 1,
            single_fraction: 0.8,
            overlap_fraction: 0.0,
            fraction_tolerance: 0.06,
            ..SimulateConfig::default()
        };
        let scenario = sample_scenario(33, &cfg).unwrap();
        let mut source = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let (rec, truth) = render_meeting(&scenario, &mut source, &cfg).unwrap();
        let fs = rec.sample_rate;
        let frames = rec.arrays[0].channels[0].len() / SRO_TRACE_SHIFT;
        let clocks: Vec<ClockEstimate> = truth
            .clocks
            .iter()
            .map(|c| {
                if c.array_id == 0 {
                    ClockEstimate::reference(0, frames, SRO_TRACE_SHIFT)
                } else {
                    oracle_clock(c, fs)
                }
            })
            .collect();
        let synced = synchronize(&rec, &clocks).unwrap();

        let frame = 4096;
        let spec_a = stft(&synced[0].channels[0], frame, 2048, Window::Hann, fs).unwrap();
        let spec_b = stft(&synced[1].channels[0], frame, 2048, Window::Hann, fs).unwrap();
        let vad = energy_vad(&synced[0].channels[0], frame, 2048, 10.0);
        let expected = scenario.tdof_s(
            scenario.speakers[0],
            scenario.mic_positions(0)[0],
            scenario.mic_positions(1)[0],
        ) * fs;
        let mut gcc = GccPhat::new(frame, 2);
        let mut close = 0;
        let mut total = 0;
        for l in 8..spec_a.frames.min(vad.len()) {
            if !vad[l] {
                continue;
            }
            let corr = gcc
                .correlate(spec_a.frame(0, l), spec_b.frame(0, l), 1024)
                .unwrap();
            if corr.peak_value < 0.15 {
                continue;
            }
            total += 1;
            if (corr.peak_lag - expected).abs() <= 2.0 {
                close += 1;
            }
        }
        assert!(total >= 20, "only {total} confident frames");
        assert!(
            close as f64 >= 0.9 * total as f64,
            "{close}/{total} within 2 samples of TDOF {expected:.2}"
        );
        let _ = Stft::new(frame, 2048, Window::Hann);
    }

    #[test]
    fn skipping_sto_leaves_the_full_offset() {
        let (scenario, rec, truth, _) = render_pair(34, 8.0);
        let fs = rec.sample_rate;
        let frames = rec.arrays[0].channels[0].len() / SRO_TRACE_SHIFT;
        // SRO compensation only: no coarse shift, no STO.
        let clocks: Vec<ClockEstimate> = truth
            .clocks
            .iter()
            .map(|c| {
                let mut clock = oracle_clock(c, fs);
                clock.coarse_lag = 0;
                clock.sto_seconds = 0.0;
                if c.array_id == 0 {
                    clock = ClockEstimate::reference(0, frames, SRO_TRACE_SHIFT);
                }
                clock
            })
            .collect();
        let synced = synchronize(&rec, &clocks).unwrap();
        let result = coarse_sync(
            &synced[0].channels[0],
            &synced[1].channels[0],
            scenario.duration_s,
            fs,
        );
        let residual = -result.lag as f64;
        let expected = truth.clocks[1].sto_s * fs;
        assert!(
            (residual - expected).abs() < 0.02 * fs,
            "residual {residual} expected about {expected}"
        );
    }

    #[test]
    fn mismatched_ids_error() {
        let (_, rec, truth, _) = render_pair(35, 8.0);
        let mut clocks: Vec<ClockEstimate> = truth
            .clocks
            .iter()
            .map(|c| oracle_clock(c, rec.sample_rate))
            .collect();
        clocks.swap(0, 1);
        assert!(synchronize(&rec, &clocks).is_err());
    }
}
