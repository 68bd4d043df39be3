//! STFT-domain resampling for sampling-rate-offset scale ratios.
//!
//! Output sample `n` approximates the input at continuous position
//! `n + offset + sum_{m<n} eps[m]` where `eps` is the per-sample rate
//! offset (piecewise constant over short frames). The integer part of the
//! accumulated drift moves the analysis window; the fractional part becomes
//! a linear phase on a zero-padded frame spectrum, so nothing wraps around
//! the frame edges.

use std::f64::consts::TAU;

use super::stft::Window;
use super::Cpx;
use crate::error::{Error, Result};

/// Maximum supported |SRO| in ppm.
pub const MAX_SRO_PPM: f64 = 1000.0;

/// Default resampler frame length (samples).
pub const RESAMPLE_FRAME: usize = 128;
/// Default resampler frame shift (samples).
pub const RESAMPLE_SHIFT: usize = 32;

/// A sampling-rate-offset trace in ppm.
#[derive(Debug, Clone)]
pub enum SroTrace {
    /// The same offset for the whole signal.
    Constant(f64),
    /// Piecewise-constant values on a frame grid with the given shift; the
    /// last value extends past the end.
    PerFrame { ppm: Vec<f64>, frame_shift: usize },
}

impl SroTrace {
    /// Trace from per-frame values on a grid with `frame_shift` samples.
    pub fn per_frame(ppm: Vec<f64>, frame_shift: usize) -> Self {
        SroTrace::PerFrame { ppm, frame_shift }
    }

    /// Offset in ppm at an absolute sample position.
    pub fn at_sample(&self, sample: usize) -> f64 {
        match self {
            SroTrace::Constant(v) => *v,
            SroTrace::PerFrame { ppm, frame_shift } => {
                if ppm.is_empty() {
                    0.0
                } else {
                    ppm[(sample / frame_shift).min(ppm.len() - 1)]
                }
            }
        }
    }

    /// Largest magnitude in the trace.
    pub fn max_abs(&self) -> f64 {
        match self {
            SroTrace::Constant(v) => v.abs(),
            SroTrace::PerFrame { ppm, .. } => ppm.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        }
    }

    /// Map each value, keeping the shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SroTrace {
        match self {
            SroTrace::Constant(v) => SroTrace::Constant(f(*v)),
            SroTrace::PerFrame { ppm, frame_shift } => SroTrace::PerFrame {
                ppm: ppm.iter().map(|&x| f(x)).collect(),
                frame_shift: *frame_shift,
            },
        }
    }

    /// The trace that undoes a resampling by `self`.
    pub fn inverse(&self) -> SroTrace {
        self.map(|ppm| {
            let eps = ppm * 1e-6;
            -eps / (1.0 + eps) * 1e6
        })
    }

    /// Accumulated drift in samples over the first `len` samples.
    pub fn accumulated_drift(&self, len: usize) -> f64 {
        match self {
            SroTrace::Constant(v) => v * 1e-6 * len as f64,
            SroTrace::PerFrame { ppm: _, frame_shift } => {
                let mut drift = 0.0;
                let mut pos = 0usize;
                while pos < len {
                    let step = (*frame_shift).min(len - pos);
                    drift += self.at_sample(pos) * 1e-6 * step as f64;
                    pos += step;
                }
                drift
            }
        }
    }
}

/// Resample with an SRO trace only.
pub fn stft_resample(signal: &[f64], trace: &SroTrace) -> Result<Vec<f64>> {
    resample_with_offset(signal, trace, 0.0)
}

/// Resample with an SRO trace plus a constant starting offset in samples.
///
/// Positive `offset` advances through the input (the first `offset` input
/// samples are skipped); negative values delay it (zeros are prepended).
/// The output has the same length as the input.
pub fn resample_with_offset(signal: &[f64], trace: &SroTrace, offset: f64) -> Result<Vec<f64>> {
    if trace.max_abs() > MAX_SRO_PPM {
        return Err(Error::SroOutOfRange {
            ppm: trace.max_abs(),
            max: MAX_SRO_PPM,
        });
    }
    let frame_size = RESAMPLE_FRAME;
    let frame_shift = RESAMPLE_SHIFT;
    if signal.len() < frame_size {
        return Err(Error::InsufficientSamples {
            needed: frame_size,
            got: signal.len(),
        });
    }

    let fft_size = 2 * frame_size;
    let pad = frame_size / 2;
    let bins = fft_size / 2 + 1;
    let out_len = signal.len();
    let frames = (out_len + frame_shift - 1) / frame_shift;

    // Hann analysis with rectangular synthesis: the per-sample window-sum
    // normalization below handles reconstruction, and the smooth window
    // edges keep the fractional band-limited shift accurate.
    let window = Window::Hann.taper(frame_size);
    let mut out = vec![0.0; out_len + frame_size];
    let mut norm = vec![0.0; out_len + frame_size];
    let mut buf = vec![0.0; fft_size];
    let mut spectrum = vec![Cpx::new(0.0, 0.0); bins];
    let mut deriv_spec = vec![Cpx::new(0.0, 0.0); bins];
    let mut time = vec![0.0; fft_size];
    let mut deriv = vec![0.0; fft_size];

    let fft = realfft::RealFftPlanner::new().plan_fft_forward(fft_size);
    let ifft = realfft::RealFftPlanner::new().plan_fft_inverse(fft_size);
    let mut fscratch = fft.make_scratch_vec();
    let mut iscratch = ifft.make_scratch_vec();
    let scale = 1.0 / fft_size as f64;
    let center = frame_size as f64 / 2.0;

    // Accumulated drift at the start of each output frame.
    let mut drift = offset;
    for l in 0..frames {
        let out_start = l * frame_shift;
        let eps = trace.at_sample(out_start) * 1e-6;
        // Drift at the frame center keeps the phase error symmetric.
        let d_center = drift + eps * center;
        let shift_int = d_center.round();
        let frac = d_center - shift_int;
        let in_start = out_start as i64 + shift_int as i64;

        buf[..pad].fill(0.0);
        buf[pad + frame_size..].fill(0.0);
        for i in 0..frame_size {
            let idx = in_start + i as i64;
            buf[pad + i] = if idx >= 0 && (idx as usize) < signal.len() {
                signal[idx as usize] * window[i]
            } else {
                0.0
            };
        }
        fft.process_with_scratch(&mut buf, &mut spectrum, &mut fscratch)
            .expect("fft size mismatch");

        // Advance through the input by `frac`: multiply bin k by
        // e^{+j 2 pi k frac / fft_size}; the padding absorbs the shift.
        for (k, c) in spectrum.iter_mut().enumerate().skip(1) {
            if k == bins - 1 {
                *c *= (std::f64::consts::PI * frac).cos();
            } else {
                let ph = TAU * k as f64 * frac / fft_size as f64;
                *c *= Cpx::new(ph.cos(), ph.sin());
            }
        }
        // Spectral derivative for the first-order within-frame drift term.
        for k in 0..bins {
            deriv_spec[k] = if k == bins - 1 {
                Cpx::new(0.0, 0.0)
            } else {
                Cpx::new(0.0, TAU * k as f64 / fft_size as f64) * spectrum[k]
            };
        }

        ifft.process_with_scratch(&mut spectrum, &mut time, &mut iscratch)
            .expect("ifft size mismatch");
        ifft.process_with_scratch(&mut deriv_spec, &mut deriv, &mut iscratch)
            .expect("ifft size mismatch");
        // Output sample i of this frame wants the input at i + drift(i), not
        // at the committed center shift; the derivative term supplies the
        // residual eps * (i - center) to first order. The normalization uses
        // the correspondingly warped analysis window times the synthesis
        // taper; the taper keeps frame-edge interpolation crumbs out of the
        // overlap-add seams.
        for i in 0..frame_size {
            if out_start + i < out.len() {
                let residual = eps * (i as f64 - center);
                let t = i as f64 + frac + residual;
                let wa = if t < 0.0 || t > frame_size as f64 {
                    0.0
                } else {
                    let s = (std::f64::consts::PI * t / frame_size as f64).sin();
                    s * s
                };
                let ws = window[i];
                out[out_start + i] += (time[pad + i] + residual * deriv[pad + i]) * scale * ws;
                norm[out_start + i] += wa * ws;
            }
        }

        drift += eps * frame_shift as f64;
    }

    out.truncate(out_len);
    // Samples without meaningful window coverage (the very edges) are zeroed
    // rather than amplified out of a vanishing normalizer.
    for (o, &n) in out.iter_mut().zip(&norm) {
        if n > 1e-3 {
            *o /= n;
        } else {
            *o = 0.0;
        }
    }
    Ok(out)
}
