//! Sampling rate offset estimation from the phase drift of the coherence
//! between coarsely aligned streams.
//!
//! Consecutive probe segments are compared through their complex coherence;
//! the average product of conjugated consecutive coherences carries a phase
//! slope over frequency proportional to the drift accumulated within one
//! probe shift. The accumulated integer delay is fed back into the segment
//! extraction of the lagging stream so the coherence stays high over long
//! recordings (closed loop).

use realfft::RealFftPlanner;

use crate::config::SyncConfig;
use crate::dsp::{Cpx, SroTrace, Window};

/// Per-frame SRO estimate plus bookkeeping for drift-consistent consumers.
#[derive(Debug, Clone)]
pub struct SroEstimate {
    /// Estimated SRO in ppm per analysis frame.
    pub ppm: Vec<f64>,
    /// Frame shift of the ppm grid (samples).
    pub frame_shift: usize,
    /// True when long silence forced the estimator to hold its last value.
    pub held: bool,
}

impl SroEstimate {
    /// All-zero estimate (for the reference array).
    pub fn zero(frames: usize, frame_shift: usize) -> Self {
        Self {
            ppm: vec![0.0; frames],
            frame_shift,
            held: false,
        }
    }

    /// The estimate as a resampler trace.
    pub fn trace(&self) -> SroTrace {
        SroTrace::per_frame(self.ppm.clone(), self.frame_shift)
    }

    /// Accumulated drift in samples at an absolute sample position; this is
    /// the quantity the STO estimator and the synchronizer must share.
    pub fn drift_at(&self, sample: usize) -> f64 {
        self.trace().accumulated_drift(sample)
    }
}

/// Estimate the time-varying SRO of `other` relative to `reference`.
///
/// Both streams must be coarsely aligned. Positive output means the other
/// stream's content advances relative to its sample index (its clock runs
/// slow), matching the sign injected by the simulator.
pub fn estimate_sro(
    reference: &[f64],
    other: &[f64],
    cfg: &SyncConfig,
    analysis_frame_shift: usize,
) -> SroEstimate {
    let probe_len = cfg.sro_probe_len;
    let probe_shift = cfg.sro_probe_shift;
    let block = 1024.min(probe_len);
    let bins = block / 2 + 1;
    let len = reference.len().min(other.len());

    let mut planner = RealFftPlanner::new();
    let fft = planner.plan_fft_forward(block);
    let mut scratch = fft.make_scratch_vec();
    let window = Window::Hann.taper(block);

    // Welch cross/auto spectra of one probe segment pair.
    let mut coherence = |seg_ref: &[f64], seg_oth: &[f64]| -> Vec<Cpx> {
        let mut cross = vec![Cpx::new(0.0, 0.0); bins];
        let mut power_ref = vec![0.0f64; bins];
        let mut power_oth = vec![0.0f64; bins];
        let mut buf = vec![0.0; block];
        let mut spec_ref = vec![Cpx::new(0.0, 0.0); bins];
        let mut spec_oth = vec![Cpx::new(0.0, 0.0); bins];
        let hop = block / 2;
        let mut pos = 0;
        while pos + block <= seg_ref.len() {
            for (b, (x, w)) in buf
                .iter_mut()
                .zip(seg_ref[pos..pos + block].iter().zip(&window))
            {
                *b = x * w;
            }
            fft.process_with_scratch(&mut buf, &mut spec_ref, &mut scratch)
                .expect("fft");
            for (b, (x, w)) in buf
                .iter_mut()
                .zip(seg_oth[pos..pos + block].iter().zip(&window))
            {
                *b = x * w;
            }
            fft.process_with_scratch(&mut buf, &mut spec_oth, &mut scratch)
                .expect("fft");
            for k in 0..bins {
                cross[k] += spec_ref[k].conj() * spec_oth[k];
                power_ref[k] += spec_ref[k].norm_sqr();
                power_oth[k] += spec_oth[k].norm_sqr();
            }
            pos += hop;
        }
        for k in 0..bins {
            let denom = (power_ref[k] * power_oth[k]).sqrt();
            cross[k] = if denom > 1e-30 {
                cross[k] / denom
            } else {
                Cpx::new(0.0, 0.0)
            };
        }
        cross
    };

    let mut avg = vec![Cpx::new(0.0, 0.0); bins];
    // Coherences are compared across disjoint data: probes `lookback` steps
    // apart share no samples, so their estimation noise is uncorrelated and
    // the product phase is unbiased. Overlapping probes would share noise,
    // which pulls the product toward the real axis and shrinks the slope.
    let lookback = (probe_len / probe_shift).max(1);
    let span = (lookback * probe_shift) as f64;
    // Highest bin whose phase stays clear of wrapping at the largest SRO
    // the estimator is specified to track.
    let max_track_ppm = 160e-6;
    let k_cap = ((block as f64 / (2.0 * span * max_track_ppm)).floor() as usize).min(bins - 1);

    let mut history: Vec<(Vec<Cpx>, i64)> = Vec::new();
    let mut drift_acc = 0.0f64;
    let mut sro_ppm = 0.0f64;
    let mut estimates: Vec<(usize, f64)> = Vec::new();
    let mut held = false;
    let alpha = cfg.sro_smoothing;

    let mut probe_start = 0usize;
    while probe_start + probe_len <= len {
        // Closed loop: extract the other stream shifted against the
        // accumulated drift so the segments keep overlapping content.
        let shift = (-drift_acc).round() as i64;
        let seg_ref = &reference[probe_start..probe_start + probe_len];
        let from = probe_start as i64 + shift;
        let mut seg_oth = vec![0.0; probe_len];
        for (m, s) in seg_oth.iter_mut().enumerate() {
            let idx = from + m as i64;
            if idx >= 0 && (idx as usize) < len {
                *s = other[idx as usize];
            }
        }

        let coh = coherence(seg_ref, &seg_oth);
        if history.len() >= lookback {
            let (prev_coh, prev_shift) = &history[history.len() - lookback];
            // The integer feedback jump between the compared probes is a
            // known exact rotation; undo it so the product only carries the
            // drift accumulated over the span.
            let jump = (shift - prev_shift) as f64;
            for k in 0..bins {
                // conj(REF) * OTH carries +2*pi*k*e/block of phase for a
                // content advance e.
                let ph = -std::f64::consts::TAU * k as f64 * jump / block as f64;
                let rot = Cpx::new(ph.cos(), ph.sin());
                avg[k] = alpha * avg[k] + (1.0 - alpha) * coh[k] * prev_coh[k].conj() * rot;
            }
            // Weighted least squares on the phase slope; weights follow the
            // coherence magnitudes accumulated in `avg`.
            let mut num = 0.0;
            let mut den = 0.0;
            let mut mass = 0.0;
            for (k, a) in avg.iter().enumerate().take(k_cap + 1).skip(1) {
                let w = a.norm();
                let phase = a.im.atan2(a.re);
                let f = std::f64::consts::TAU * k as f64 / block as f64;
                num += w * f * phase;
                den += w * f * f;
                mass += w;
            }
            if mass > 0.05 * k_cap as f64 && den > 0.0 {
                // phase = +2*pi*k*dd/block  =>  dd = +slope.
                let drift_over_span = num / den;
                sro_ppm = drift_over_span / span * 1e6;
            } else {
                held = true;
            }
            estimates.push((probe_start + probe_len / 2, sro_ppm));
            drift_acc += sro_ppm * 1e-6 * probe_shift as f64;
        } else {
            estimates.push((probe_start + probe_len / 2, 0.0));
        }
        history.push((coh, shift));
        if history.len() > lookback {
            history.remove(0);
        }
        probe_start += probe_shift;
    }

    // Resample the probe-centered estimates onto the analysis frame grid.
    let frames = len / analysis_frame_shift + 1;
    let mut ppm = vec![0.0; frames];
    if !estimates.is_empty() {
        // Backfill the warm-up with the first converged value.
        let first_valid = estimates
            .iter()
            .find(|(_, v)| *v != 0.0)
            .map(|&(_, v)| v)
            .unwrap_or(0.0);
        for (l, out) in ppm.iter_mut().enumerate() {
            let pos = l * analysis_frame_shift + analysis_frame_shift / 2;
            *out = interp_estimates(&estimates, pos, first_valid);
        }
    }
    SroEstimate {
        ppm,
        frame_shift: analysis_frame_shift,
        held,
    }
}

fn interp_estimates(estimates: &[(usize, f64)], pos: usize, first_valid: f64) -> f64 {
    if pos <= estimates[0].0 {
        return first_valid;
    }
    for w in estimates.windows(2) {
        let (p0, v0) = w[0];
        let (p1, v1) = w[1];
        if pos <= p1 {
            let t = (pos - p0) as f64 / (p1 - p0) as f64;
            let v0 = if v0 == 0.0 && p0 <= estimates[0].0 { first_valid } else { v0 };
            return v0 * (1.0 - t) + v1 * t;
        }
    }
    estimates.last().map(|&(_, v)| v).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SyncConfig;
    use crate::dsp::stft_resample;
    use crate::simulate::SpeechShapedNoiseSource;
    use crate::simulate::UtteranceSource;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Speech-like test signal: bursts with pauses.
    fn speechy(seconds: f64, seed: u64) -> Vec<f64> {
        let fs = 16000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut src = SpeechShapedNoiseSource::new(fs);
        let len = (seconds * fs) as usize;
        let mut out = vec![0.0; len];
        let mut pos = 0usize;
        while pos < len {
            let u = src.utterance(0, &mut rng).unwrap();
            for (n, &s) in u.samples.iter().enumerate() {
                if pos + n < len {
                    out[pos + n] = s;
                }
            }
            pos += u.samples.len() + (0.4 * fs) as usize;
        }
        out
    }

    fn mean_abs_tail(est: &SroEstimate, truth: impl Fn(usize) -> f64, skip_s: f64) -> f64 {
        let skip = (skip_s * 16000.0 / est.frame_shift as f64) as usize;
        let vals: Vec<f64> = est.ppm[skip..]
            .iter()
            .enumerate()
            .map(|(l, &v)| (v - truth((l + skip) * est.frame_shift)).abs())
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    #[test]
    fn zero_sro_converges_to_zero() {
        let x = speechy(30.0, 1);
        let est = estimate_sro(&x, &x, &SyncConfig::default(), 256);
        let err = mean_abs_tail(&est, |_| 0.0, 10.0);
        assert!(err <= 0.05, "mean |err| {err} ppm");
    }

    #[test]
    fn constant_sro_is_recovered_within_one_ppm() {
        let x = speechy(40.0, 2);
        let y = stft_resample(&x, &crate::dsp::SroTrace::Constant(100.0)).unwrap();
        let est = estimate_sro(&x, &y, &SyncConfig::default(), 256);
        let err = mean_abs_tail(&est, |_| 100.0, 10.0);
        assert!(err <= 1.0, "mean |err| {err} ppm");
    }

    #[test]
    fn negative_sro_keeps_sign() {
        let x = speechy(40.0, 3);
        let y = stft_resample(&x, &crate::dsp::SroTrace::Constant(-60.0)).unwrap();
        let est = estimate_sro(&x, &y, &SyncConfig::default(), 256);
        let err = mean_abs_tail(&est, |_| -60.0, 10.0);
        assert!(err <= 1.0, "mean |err| {err} ppm");
    }

    #[test]
    fn ramp_is_tracked_with_bounded_lag() {
        let fs = 16000.0;
        let x = speechy(60.0, 4);
        let ramp: Vec<f64> = (0..(60.0 * fs as f64 / 256.0) as usize)
            .map(|l| 50.0 * (l as f64 * 256.0 / fs / 60.0))
            .collect();
        let trace = crate::dsp::SroTrace::per_frame(ramp.clone(), 256);
        let y = stft_resample(&x, &trace).unwrap();
        let est = estimate_sro(&x, &y, &SyncConfig::default(), 256);
        // A tracking lag of tau seconds shows up as tau * slope ppm of bias;
        // 5 s at 0.833 ppm/s is about 4.2 ppm.
        let err = mean_abs_tail(
            &est,
            |sample| 50.0 * (sample as f64 / fs / 60.0),
            15.0,
        );
        assert!(err <= 5.0 * 50.0 / 60.0, "mean |err| {err} ppm");
    }

    #[test]
    fn silence_holds_last_estimate() {
        let fs = 16000.0;
        let mut x = speechy(20.0, 5);
        let silent_from = (12.0 * fs) as usize;
        for v in &mut x[silent_from..] {
            *v = 0.0;
        }
        let y = stft_resample(&x, &crate::dsp::SroTrace::Constant(80.0)).unwrap();
        let est = estimate_sro(&x, &y, &SyncConfig::default(), 256);
        assert!(est.held);
        // Within a couple of ppm across the silence boundary, and exactly
        // frozen once the coherence mass has decayed.
        let at_10s = est.ppm[(10.0 * fs / 256.0) as usize];
        let at_16s = est.ppm[(16.0 * fs / 256.0) as usize];
        let at_end = *est.ppm.last().unwrap();
        assert!((at_end - at_10s).abs() < 5.0, "{at_10s} vs {at_end}");
        assert_eq!(at_16s, at_end);
    }
}
