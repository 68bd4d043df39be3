//! Rendering of asynchronous multi-array meeting recordings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::compose::{compose_meeting, Composition, UtteranceSource};
use super::rir::RoomReverb;
use super::scenario::{Scenario, SRO_TRACE_SHIFT};
use crate::config::SimulateConfig;
use crate::dsp::{resample_with_offset, Cpx, SroTrace};
use crate::error::Result;

/// Multichannel recording of one array in its own clock domain.
#[derive(Debug, Clone)]
pub struct ArrayRecording {
    pub array_id: usize,
    pub channels: Vec<Vec<f64>>,
}

/// The simulator output: per-array sample streams.
#[derive(Debug, Clone)]
pub struct AsyncRecordingSet {
    pub sample_rate: f64,
    pub arrays: Vec<ArrayRecording>,
}

/// Ground-truth clock parameters of one array.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrueClock {
    pub array_id: usize,
    pub sto_s: f64,
    /// SRO in ppm per frame of [`SRO_TRACE_SHIFT`] samples.
    pub sro_ppm: Vec<f64>,
}

/// Realized activity fractions of a rendered meeting.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ActivityFractions {
    pub single: f64,
    pub overlap: f64,
    pub silence: f64,
}

/// Everything the evaluation needs to know about a rendered meeting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceInfo {
    pub speaker: usize,
    pub onset_s: f64,
    pub offset_s: f64,
    pub transcript_id: String,
}

/// Ground truth accompanying an [`AsyncRecordingSet`].
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub utterances: Vec<UtteranceInfo>,
    /// Per-speaker frame activity on the [`SRO_TRACE_SHIFT`] grid.
    pub activity: Vec<Vec<bool>>,
    pub activity_frame_shift: usize,
    pub clocks: Vec<TrueClock>,
    /// Clean reverberant image of each speaker at the reference microphone
    /// (array 0, channel 0), on the reference timeline.
    pub speaker_refs: Vec<Vec<f64>>,
    pub fractions: ActivityFractions,
}

/// Render a meeting for a scenario: compose utterances, reverberate with
/// image-method responses, add sensor noise at the scenario SNR, then inject
/// per-array sampling time and sampling rate offsets.
pub fn render_meeting(
    scenario: &Scenario,
    source: &mut dyn UtteranceSource,
    cfg: &SimulateConfig,
) -> Result<(AsyncRecordingSet, GroundTruth)> {
    let fs = scenario.sample_rate as f64;
    let duration = (scenario.duration_s * fs) as usize;
    let num_speakers = scenario.speakers.len();

    let composition = compose_meeting(cfg, num_speakers, source, scenario.seed)?;
    let (single, overlap, silence) = composition.fractions();

    // The ideal timeline must outlast the signal cropped by the largest STO.
    let max_sto = scenario.sto_s.iter().fold(0.0f64, |m, &v| m.max(v));
    let ideal_len = duration + (max_sto * fs).ceil() as usize + 1024;

    // Dry per-speaker timelines.
    let mut dry: Vec<Vec<f64>> = vec![vec![0.0; ideal_len]; num_speakers];
    for u in &composition.utterances {
        let lane = &mut dry[u.speaker];
        for (n, &s) in u.samples.iter().enumerate() {
            if u.onset + n < ideal_len {
                lane[u.onset + n] += s;
            }
        }
    }

    // Reverberant mixes per microphone, plus per-speaker reference images.
    let room3 = [scenario.room[0], scenario.room[1], scenario.room_height_m];
    let reverb = RoomReverb::new(room3, scenario.t60_s, fs)?;
    let mut conv = TimelineConvolver::new(ideal_len);
    let mut mixes: Vec<Vec<Vec<f64>>> = Vec::with_capacity(scenario.arrays.len());
    let mut speaker_refs: Vec<Vec<f64>> = vec![Vec::new(); num_speakers];
    for (j, _) in scenario.arrays.iter().enumerate() {
        let mics = scenario.mic_positions_3d(j);
        let mut channels = Vec::with_capacity(mics.len());
        for (m, mic) in mics.iter().enumerate() {
            let mut mix = vec![0.0; ideal_len];
            for i in 0..num_speakers {
                let rir = reverb.rir(scenario.speaker_position_3d(i), *mic);
                let image = conv.convolve(&dry[i], &rir);
                if j == 0 && m == 0 {
                    speaker_refs[i] = image[..duration].to_vec();
                }
                for (o, v) in mix.iter_mut().zip(&image) {
                    *o += v;
                }
            }
            channels.push(mix);
        }
        mixes.push(channels);
    }
    drop(dry);

    // Sensor noise at the scenario SNR, relative to the mean mix power.
    let mut power = 0.0;
    let mut count = 0usize;
    for array in &mixes {
        for ch in array {
            power += ch.iter().map(|v| v * v).sum::<f64>();
            count += ch.len();
        }
    }
    let noise_sigma =
        (power / count as f64 / 10f64.powf(scenario.snr_db / 10.0)).sqrt();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x6e6f_6973);
    let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
    for array in &mut mixes {
        for ch in array.iter_mut() {
            for v in ch.iter_mut() {
                *v += normal.sample(&mut noise_rng);
            }
        }
    }

    // Inject asynchrony: device j reads the ideal timeline starting at its
    // STO with its own clock drift.
    let mut arrays = Vec::with_capacity(mixes.len());
    for (j, channels) in mixes.into_iter().enumerate() {
        let sto_samples = scenario.sto_s[j] * fs;
        let trace = SroTrace::per_frame(scenario.sro_ppm[j].clone(), SRO_TRACE_SHIFT);
        let injected: Result<Vec<Vec<f64>>> = channels
            .into_iter()
            .map(|ch| {
                let out = if j == 0 {
                    ch
                } else {
                    resample_with_offset(&ch, &trace, sto_samples)?
                };
                Ok(out[..duration].to_vec())
            })
            .collect();
        arrays.push(ArrayRecording {
            array_id: j,
            channels: injected?,
        });
    }

    // Ground truth.
    let frames = duration / SRO_TRACE_SHIFT;
    let mut activity = vec![vec![false; frames]; num_speakers];
    for u in &composition.utterances {
        for l in 0..frames {
            let center = l * SRO_TRACE_SHIFT + SRO_TRACE_SHIFT / 2;
            if center >= u.onset && center < u.end() {
                activity[u.speaker][l] = true;
            }
        }
    }
    let utterances = utterance_infos(&composition, fs);
    let clocks = (0..scenario.arrays.len())
        .map(|j| TrueClock {
            array_id: j,
            sto_s: scenario.sto_s[j],
            sro_ppm: scenario.sro_ppm[j].clone(),
        })
        .collect();

    Ok((
        AsyncRecordingSet {
            sample_rate: fs,
            arrays,
        },
        GroundTruth {
            utterances,
            activity,
            activity_frame_shift: SRO_TRACE_SHIFT,
            clocks,
            speaker_refs,
            fractions: ActivityFractions {
                single,
                overlap,
                silence,
            },
        },
    ))
}

fn utterance_infos(composition: &Composition, fs: f64) -> Vec<UtteranceInfo> {
    composition
        .utterances
        .iter()
        .map(|u| UtteranceInfo {
            speaker: u.speaker,
            onset_s: u.onset as f64 / fs,
            offset_s: u.end() as f64 / fs,
            transcript_id: u.transcript_id.clone(),
        })
        .collect()
}

/// FFT convolution of timeline-length signals against short responses,
/// caching the timeline transform across calls with the same signal.
struct TimelineConvolver {
    fft_size: usize,
    fft: std::sync::Arc<dyn realfft::RealToComplex<f64>>,
    ifft: std::sync::Arc<dyn realfft::ComplexToReal<f64>>,
    cached_signal: Vec<f64>,
    cached_spectrum: Vec<Cpx>,
    scratch: Vec<Cpx>,
}

impl TimelineConvolver {
    fn new(timeline_len: usize) -> Self {
        // Responses stay well below 16 k samples at the supported T60 range.
        let fft_size = (timeline_len + 16384).next_power_of_two();
        let mut planner = realfft::RealFftPlanner::new();
        let fft = planner.plan_fft_forward(fft_size);
        let ifft = planner.plan_fft_inverse(fft_size);
        let scratch_len = fft.make_scratch_vec().len().max(ifft.make_scratch_vec().len());
        Self {
            fft_size,
            fft,
            ifft,
            cached_signal: Vec::new(),
            cached_spectrum: Vec::new(),
            scratch: vec![Cpx::new(0.0, 0.0); scratch_len],
        }
    }

    fn convolve(&mut self, signal: &[f64], rir: &[f64]) -> Vec<f64> {
        assert!(signal.len() + rir.len() <= self.fft_size + 1);
        if self.cached_signal != signal {
            let mut buf = vec![0.0; self.fft_size];
            buf[..signal.len()].copy_from_slice(signal);
            let mut spec = vec![Cpx::new(0.0, 0.0); self.fft_size / 2 + 1];
            self.fft
                .process_with_scratch(&mut buf, &mut spec, &mut self.scratch)
                .expect("fft size mismatch");
            self.cached_signal = signal.to_vec();
            self.cached_spectrum = spec;
        }
        let mut buf = vec![0.0; self.fft_size];
        buf[..rir.len()].copy_from_slice(rir);
        let mut spec = vec![Cpx::new(0.0, 0.0); self.fft_size / 2 + 1];
        self.fft
            .process_with_scratch(&mut buf, &mut spec, &mut self.scratch)
            .expect("fft size mismatch");
        for (s, c) in spec.iter_mut().zip(&self.cached_spectrum) {
            *s *= c;
        }
        let mut out = vec![0.0; self.fft_size];
        self.ifft
            .process_with_scratch(&mut spec, &mut out, &mut self.scratch)
            .expect("ifft size mismatch");
        let scale = 1.0 / self.fft_size as f64;
        out.truncate(signal.len());
        for v in &mut out {
            *v *= scale;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{energy_vad, stft, GccPhat, Window};
    use crate::simulate::{sample_scenario, SpeechShapedNoiseSource};

    fn small_cfg() -> SimulateConfig {
        SimulateConfig {
            duration_s: 12.0,
            sto_max_s: 1.0,
            ..SimulateConfig::default()
        }
    }

    #[test]
    fn no_asynchrony_leaves_only_geometric_delays() {
        let cfg = SimulateConfig {
            duration_s: 8.0,
            sto_min_s: 0.0,
            sto_max_s: 1e-9,
            sro_min_ppm: -1e-9,
            sro_max_ppm: 1e-9,
            sro_walk_ppm_per_s: 0.0,
            speakers_min: 1,
            speakers_max: 1,
            t60_min_s: 0.2,
            t60_max_s: 0.21,
            snr_min_db: 60.0,
            snr_max_db: 61.0,
            single_fraction: 0.78,
            overlap_fraction: 0.0,
            fraction_tolerance: 0.06,
            ..SimulateConfig::default()
        };
        let scenario = sample_scenario(3, &cfg).unwrap();
        let mut source = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let (rec, _) = render_meeting(&scenario, &mut source, &cfg).unwrap();

        // Cross-array GCC peak must sit at the TDOF of the single speaker.
        let fs = rec.sample_rate;
        let frame = 4096;
        let a = stft(&rec.arrays[0].channels[0], frame, frame, Window::Rect, fs).unwrap();
        let b = stft(&rec.arrays[1].channels[0], frame, frame, Window::Rect, fs).unwrap();
        let expected = scenario.tdof_s(
            scenario.speakers[0],
            scenario.mic_positions(0)[0],
            scenario.mic_positions(1)[0],
        ) * fs;

        let mut gcc = GccPhat::new(frame, 4);
        let vad = energy_vad(&rec.arrays[0].channels[0], frame, frame, 10.0);
        let mut hits = 0;
        let mut total = 0;
        for l in 0..a.frames {
            if !vad[l] {
                continue;
            }
            let corr = gcc.correlate(a.frame(0, l), b.frame(0, l), 256).unwrap();
            if corr.peak_value > 0.2 {
                total += 1;
                if (corr.peak_lag - expected).abs() < 1.0 {
                    hits += 1;
                }
            }
        }
        assert!(total > 10, "too few confident frames ({total})");
        assert!(
            hits as f64 >= 0.8 * total as f64,
            "{hits}/{total} frames near TDOF {expected:.2}"
        );
    }

    #[test]
    fn injected_sto_shows_in_cross_correlation() {
        let cfg = SimulateConfig {
            duration_s: 10.0,
            sto_min_s: 0.999,
            sto_max_s: 1.001,
            sro_min_ppm: -1e-9,
            sro_max_ppm: 1e-9,
            sro_walk_ppm_per_s: 0.0,
            speakers_min: 3,
            speakers_max: 3,
            snr_min_db: 40.0,
            snr_max_db: 41.0,
            ..SimulateConfig::default()
        };
        let scenario = sample_scenario(11, &cfg).unwrap();
        let mut source = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let (rec, _) = render_meeting(&scenario, &mut source, &cfg).unwrap();
        let fs = rec.sample_rate;

        // Full cross-correlation of 4 s segments around the same content.
        let ref_sig = &rec.arrays[0].channels[0];
        let other = &rec.arrays[1].channels[0];
        let seg = (4.0 * fs as f64) as usize;
        let sto_samples = (scenario.sto_s[1] * fs).round() as i64;
        // Device 1 started ~1 s later: its sample 0 is the reference's
        // sample 16000, so the cross-correlation peaks near -16000.
        let mut best = (0i64, f64::MIN);
        for lag in (-sto_samples - 400..-sto_samples + 400).step_by(4) {
            let mut acc = 0.0;
            for n in 0..seg {
                let m = n as i64 + 2 * fs as i64 + lag;
                if m >= 0 && (m as usize) < other.len() {
                    acc += ref_sig[n + 2 * fs as usize] * other[m as usize];
                }
            }
            if acc > best.1 {
                best = (lag, acc);
            }
        }
        assert!(
            (best.0 + sto_samples).abs() <= 200,
            "peak lag {} expected near {}",
            best.0,
            -sto_samples
        );
    }

    #[test]
    fn activity_fractions_match_composition_targets() {
        let cfg = small_cfg();
        let scenario = sample_scenario(5, &cfg).unwrap();
        let mut source = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let (_, truth) = render_meeting(&scenario, &mut source, &cfg).unwrap();
        assert!((truth.fractions.single - cfg.single_fraction).abs() <= cfg.fraction_tolerance);
        assert!((truth.fractions.overlap - cfg.overlap_fraction).abs() <= cfg.fraction_tolerance);
    }

    #[test]
    fn reference_array_is_untouched_by_clock_injection() {
        let cfg = small_cfg();
        let scenario = sample_scenario(5, &cfg).unwrap();
        assert_eq!(scenario.sto_s[0], 0.0);
        assert!(scenario.sro_ppm[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn determinism_bitwise() {
        let cfg = small_cfg();
        let scenario = sample_scenario(6, &cfg).unwrap();
        let mut s1 = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let mut s2 = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let (r1, _) = render_meeting(&scenario, &mut s1, &cfg).unwrap();
        let (r2, _) = render_meeting(&scenario, &mut s2, &cfg).unwrap();
        for (a, b) in r1.arrays.iter().zip(&r2.arrays) {
            for (ca, cb) in a.channels.iter().zip(&b.channels) {
                assert_eq!(ca, cb);
            }
        }
    }
}
