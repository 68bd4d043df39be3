//! Meeting composition: utterance sources and a feedback composer that hits
//! target single-speaker/overlap/silence fractions.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::SimulateConfig;
use crate::error::{Error, Result};

/// A dry utterance with an id standing in for its transcript.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub samples: Vec<f64>,
    pub transcript_id: String,
}

/// Supplier of dry speech material per speaker.
pub trait UtteranceSource {
    fn utterance(&mut self, speaker: usize, rng: &mut ChaCha8Rng) -> Result<Utterance>;
}

/// Synthetic speech-shaped noise bursts; enables corpus-free runs.
///
/// White noise is shaped by a one-pole lowpass with a 500 Hz corner and
/// modulated with a syllable-rate envelope.
pub struct SpeechShapedNoiseSource {
    sample_rate: f64,
    counter: usize,
}

impl SpeechShapedNoiseSource {
    pub fn new(sample_rate: f64) -> Self {
        Self {
            sample_rate,
            counter: 0,
        }
    }
}

impl UtteranceSource for SpeechShapedNoiseSource {
    fn utterance(&mut self, speaker: usize, rng: &mut ChaCha8Rng) -> Result<Utterance> {
        let fs = self.sample_rate;
        let duration = rng.random_range(2.0..5.0);
        let len = (duration * fs) as usize;
        let pole = (-std::f64::consts::TAU * 500.0 / fs).exp();
        let am_rate = rng.random_range(3.0..5.0);
        let am_phase = rng.random_range(0.0..std::f64::consts::TAU);
        let mut state = 0.0;
        let mut samples = Vec::with_capacity(len);
        for n in 0..len {
            let white: f64 = rng.random_range(-1.0..1.0);
            state = pole * state + (1.0 - pole) * white;
            let t = n as f64 / fs;
            let am = 1.0 + 0.5 * (std::f64::consts::TAU * am_rate * t + am_phase).sin();
            // 50 ms onset/offset ramps.
            let ramp = (t / 0.05).min(1.0).min((duration - t) / 0.05).max(0.0);
            samples.push(state * am * ramp);
        }
        let rms = (samples.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        for s in &mut samples {
            *s *= 0.1 / rms;
        }
        self.counter += 1;
        Ok(Utterance {
            samples,
            transcript_id: format!("ssn-{speaker}-{:04}", self.counter),
        })
    }
}

/// Utterances from a directory tree: one subdirectory per speaker holding
/// 16 kHz mono WAV files.
pub struct DirUtteranceSource {
    files: Vec<Vec<PathBuf>>,
    cursor: Vec<usize>,
    sample_rate: u32,
}

impl DirUtteranceSource {
    pub fn open(dir: &Path, sample_rate: u32) -> Result<Self> {
        let mut speaker_dirs: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        speaker_dirs.sort();
        if speaker_dirs.is_empty() {
            return Err(Error::InsufficientMaterial(format!(
                "no speaker subdirectories in {}",
                dir.display()
            )));
        }
        let mut files = Vec::new();
        for d in &speaker_dirs {
            let mut wavs: Vec<PathBuf> = std::fs::read_dir(d)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map_or(false, |e| e == "wav"))
                .collect();
            wavs.sort();
            if wavs.is_empty() {
                return Err(Error::InsufficientMaterial(format!(
                    "speaker directory {} has no wav files",
                    d.display()
                )));
            }
            files.push(wavs);
        }
        Ok(Self {
            cursor: vec![0; files.len()],
            files,
            sample_rate,
        })
    }
}

impl UtteranceSource for DirUtteranceSource {
    fn utterance(&mut self, speaker: usize, _rng: &mut ChaCha8Rng) -> Result<Utterance> {
        let bank = speaker % self.files.len();
        let files = &self.files[bank];
        let path = &files[self.cursor[bank] % files.len()];
        self.cursor[bank] += 1;
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        if spec.sample_rate != self.sample_rate || spec.channels != 1 {
            return Err(Error::InsufficientMaterial(format!(
                "{} must be {} Hz mono",
                path.display(),
                self.sample_rate
            )));
        }
        let samples: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Float => reader
                .samples::<f32>()
                .map(|s| s.map(|v| v as f64))
                .collect::<std::result::Result<_, _>>()?,
            hound::SampleFormat::Int => {
                let denom = (1i64 << (spec.bits_per_sample - 1)) as f64;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / denom))
                    .collect::<std::result::Result<_, _>>()?
            }
        };
        Ok(Utterance {
            samples,
            transcript_id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        })
    }
}

/// One utterance placed on the meeting timeline.
#[derive(Debug, Clone)]
pub struct PlacedUtterance {
    pub speaker: usize,
    pub onset: usize,
    pub samples: Vec<f64>,
    pub transcript_id: String,
}

impl PlacedUtterance {
    pub fn end(&self) -> usize {
        self.onset + self.samples.len()
    }
}

/// A composed meeting before reverberation.
#[derive(Debug, Clone)]
pub struct Composition {
    pub utterances: Vec<PlacedUtterance>,
    pub duration: usize,
}

impl Composition {
    /// Fractions of the duration with exactly one, exactly two, and zero
    /// active speakers.
    pub fn fractions(&self) -> (f64, f64, f64) {
        let mut count = vec![0u8; self.duration];
        for u in &self.utterances {
            for n in u.onset..u.end().min(self.duration) {
                count[n] = count[n].saturating_add(1);
            }
        }
        let single = count.iter().filter(|&&c| c == 1).count() as f64;
        let overlap = count.iter().filter(|&&c| c >= 2).count() as f64;
        let silence = count.iter().filter(|&&c| c == 0).count() as f64;
        let d = self.duration as f64;
        (single / d, overlap / d, silence / d)
    }
}

/// Compose a meeting so that single/overlap/silence fractions land within
/// the configured tolerance, using a greedy composer with target-fraction
/// feedback. Several attempts with derived sub-seeds are made.
pub fn compose_meeting(
    cfg: &SimulateConfig,
    num_speakers: usize,
    source: &mut dyn UtteranceSource,
    seed: u64,
) -> Result<Composition> {
    let mut best: Option<(f64, Composition)> = None;
    for attempt in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (attempt.wrapping_mul(0x9e37_79b9)));
        let comp = compose_once(cfg, num_speakers, source, &mut rng)?;
        let (single, overlap, silence) = comp.fractions();
        let dev = (single - cfg.single_fraction)
            .abs()
            .max((overlap - cfg.overlap_fraction).abs())
            .max((silence - (1.0 - cfg.single_fraction - cfg.overlap_fraction)).abs());
        if dev <= cfg.fraction_tolerance {
            return Ok(comp);
        }
        if best.as_ref().map_or(true, |(d, _)| dev < *d) {
            best = Some((dev, comp));
        }
    }
    Err(Error::InsufficientMaterial(format!(
        "could not reach target activity fractions (best deviation {:.3})",
        best.map(|(d, _)| d).unwrap_or(1.0)
    )))
}

fn compose_once(
    cfg: &SimulateConfig,
    num_speakers: usize,
    source: &mut dyn UtteranceSource,
    rng: &mut ChaCha8Rng,
) -> Result<Composition> {
    let fs = cfg.sample_rate as f64;
    let duration = (cfg.duration_s * fs) as usize;
    let silence_target = 1.0 - cfg.single_fraction - cfg.overlap_fraction;

    let mut placed: Vec<PlacedUtterance> = Vec::new();
    let mut speech_per_speaker = vec![0usize; num_speakers];
    let mut overlap = 0i64;
    let mut silence = 0i64;

    // First utterance after a short lead-in.
    let mut u = source.utterance(0, rng)?;
    let lead = (rng.random_range(0.2..0.8) * fs) as usize;
    silence += lead as i64;
    speech_per_speaker[0] += u.samples.len();
    placed.push(PlacedUtterance {
        speaker: 0,
        onset: lead,
        samples: std::mem::take(&mut u.samples),
        transcript_id: u.transcript_id,
    });

    while placed.last().unwrap().end() < duration {
        let last = placed.last().unwrap();
        let total = last.end() as f64;
        let deficit_overlap = cfg.overlap_fraction - overlap as f64 / total;
        let deficit_silence = silence_target - silence as f64 / total;

        // Next speaker: the least-served one that differs from the last.
        let speaker = (0..num_speakers)
            .filter(|&s| s != last.speaker)
            .min_by_key(|&s| speech_per_speaker[s])
            .unwrap_or(0);
        let utt = source.utterance(speaker, rng)?;
        let len = utt.samples.len();

        let onset = if deficit_overlap > deficit_silence && deficit_overlap > 0.0 {
            // Overlap the tail of the last utterance; never more than two
            // concurrent speakers, so stay within the last utterance only.
            let max_ov = (last.samples.len().min(len) as f64 * 0.6)
                .min(2.5 * fs)
                .min((deficit_overlap * (total + len as f64)) + 0.5 * fs);
            let ov = (rng.random_range(0.3..1.0) * max_ov) as usize;
            let ov = ov.min(last.end() - last.onset);
            overlap += ov as i64;
            last.end() - ov
        } else if deficit_silence > 0.0 {
            let gap = (rng.random_range(0.3..1.2) * fs) as usize;
            silence += gap as i64;
            last.end() + gap
        } else {
            last.end()
        };

        speech_per_speaker[speaker] += len;
        placed.push(PlacedUtterance {
            speaker,
            onset,
            samples: utt.samples,
            transcript_id: utt.transcript_id,
        });
    }

    // Crop to the meeting duration.
    placed.retain(|u| u.onset < duration);
    for u in &mut placed {
        if u.end() > duration {
            u.samples.truncate(duration - u.onset);
        }
    }
    Ok(Composition {
        utterances: placed,
        duration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_hit_targets() {
        let cfg = SimulateConfig::default();
        let mut source = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let comp = compose_meeting(&cfg, 4, &mut source, 123).unwrap();
        let (single, overlap, silence) = comp.fractions();
        assert!((single - 0.66).abs() <= 0.05, "single {single}");
        assert!((overlap - 0.21).abs() <= 0.05, "overlap {overlap}");
        assert!((silence - 0.13).abs() <= 0.05, "silence {silence}");
    }

    #[test]
    fn never_more_than_two_concurrent() {
        let cfg = SimulateConfig::default();
        let mut source = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let comp = compose_meeting(&cfg, 5, &mut source, 7).unwrap();
        let mut count = vec![0u8; comp.duration];
        for u in &comp.utterances {
            for n in u.onset..u.end().min(comp.duration) {
                count[n] += 1;
            }
        }
        assert!(count.iter().all(|&c| c <= 2));
    }

    #[test]
    fn same_speaker_never_overlaps_self() {
        let cfg = SimulateConfig::default();
        let mut source = SpeechShapedNoiseSource::new(cfg.sample_rate as f64);
        let comp = compose_meeting(&cfg, 3, &mut source, 99).unwrap();
        for (i, a) in comp.utterances.iter().enumerate() {
            for b in comp.utterances.iter().skip(i + 1) {
                if a.speaker == b.speaker {
                    assert!(b.onset >= a.end() || a.onset >= b.end());
                }
            }
        }
    }

    #[test]
    fn speech_shaped_bursts_are_lowpassed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut src = SpeechShapedNoiseSource::new(16000.0);
        let u = src.utterance(0, &mut rng).unwrap();
        let spec = crate::dsp::stft(&u.samples, 1024, 256, crate::dsp::Window::SqrtHann, 16000.0)
            .unwrap();
        let mut low = 0.0;
        let mut high = 0.0;
        for l in 0..spec.frames {
            for (k, c) in spec.frame(0, l).iter().enumerate() {
                if k < 64 {
                    low += c.norm_sqr();
                } else if k >= 256 {
                    high += c.norm_sqr();
                }
            }
        }
        assert!(low > 10.0 * high, "low {low} high {high}");
    }
}
