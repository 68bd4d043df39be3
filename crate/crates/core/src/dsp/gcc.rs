//! Generalized cross-correlation with phase transform.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner};

use super::Cpx;
use crate::error::{Error, Result};

/// A whitened cross-correlation over a symmetric lag window.
///
/// The curve is kept on an oversampled grid so it can be evaluated at
/// fractional lags; `peak_lag` carries parabolic sub-sample interpolation.
/// Sign convention: a positive lag means the second signal lags the first.
#[derive(Debug, Clone)]
pub struct CorrelationFunction {
    /// Maximum lag of the symmetric window, in samples.
    pub max_lag: usize,
    /// Grid points per sample.
    pub oversample: usize,
    /// Correlation values at lags `-max_lag ..= max_lag` step `1/oversample`.
    pub values: Vec<f64>,
    /// Interpolated lag of the maximum, in samples.
    pub peak_lag: f64,
    /// Interpolated maximum; 1.0 for identical frames.
    pub peak_value: f64,
}

impl CorrelationFunction {
    /// Correlation value at a fractional lag (linear interpolation on the
    /// oversampled grid); zero outside the lag window.
    pub fn value_at(&self, lag: f64) -> f64 {
        let pos = (lag + self.max_lag as f64) * self.oversample as f64;
        if pos < 0.0 || pos > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < self.values.len() {
            self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
        } else {
            self.values[i]
        }
    }

    /// Value at an integer lag.
    pub fn value_at_sample(&self, lag: i64) -> f64 {
        self.value_at(lag as f64)
    }
}

/// Reusable GCC-PhaT engine for one spectrum size.
pub struct GccPhat {
    frame_size: usize,
    oversample: usize,
    ifft: Arc<dyn ComplexToReal<f64>>,
    spectrum: Vec<Cpx>,
    curve: Vec<f64>,
    scratch: Vec<Cpx>,
}

impl GccPhat {
    /// `frame_size` is the FFT length the input spectra were produced with;
    /// `oversample` refines the lag grid by zero-padding the cross spectrum.
    pub fn new(frame_size: usize, oversample: usize) -> Self {
        let n_os = frame_size * oversample;
        let ifft = RealFftPlanner::new().plan_fft_inverse(n_os);
        let scratch = ifft.make_scratch_vec();
        Self {
            frame_size,
            oversample,
            ifft,
            spectrum: vec![Cpx::new(0.0, 0.0); n_os / 2 + 1],
            curve: vec![0.0; n_os],
            scratch,
        }
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    /// Whitened cross-correlation of two half spectra.
    ///
    /// Bins where the cross spectrum vanishes get zero weight instead of
    /// blowing up the phase normalization.
    pub fn correlate(
        &mut self,
        frame_a: &[Cpx],
        frame_b: &[Cpx],
        max_lag: usize,
    ) -> Result<CorrelationFunction> {
        let bins = self.frame_size / 2 + 1;
        if frame_a.len() != bins || frame_b.len() != bins {
            return Err(Error::Mismatch(format!(
                "spectrum bin counts {}/{} do not match engine size {}",
                frame_a.len(),
                frame_b.len(),
                bins
            )));
        }
        if 2 * max_lag >= self.frame_size {
            return Err(Error::Mismatch(format!(
                "max_lag {} must be below frame_size/2 = {}",
                max_lag,
                self.frame_size / 2
            )));
        }

        self.spectrum.iter_mut().for_each(|c| *c = Cpx::new(0.0, 0.0));
        let mut weight_sum = 0.0;
        for k in 0..bins {
            let g = frame_a[k].conj() * frame_b[k];
            let mag = g.norm();
            if mag > 0.0 {
                let multiplicity = if k == 0 || k == bins - 1 { 1.0 } else { 2.0 };
                weight_sum += multiplicity;
                let mut v = g / mag;
                if k == bins - 1 {
                    // Original Nyquist bin splits when embedded in the longer
                    // spectrum used for the oversampled inverse transform.
                    v *= 0.5;
                }
                self.spectrum[k] = v;
            }
        }

        let os = self.oversample;
        let window = max_lag * os;
        let mut values = vec![0.0; 2 * window + 1];
        if weight_sum > 0.0 {
            self.ifft
                .process_with_scratch(&mut self.spectrum, &mut self.curve, &mut self.scratch)
                .expect("ifft size mismatch");
            let n_os = self.curve.len();
            for (i, v) in values.iter_mut().enumerate() {
                let q = i as i64 - window as i64;
                let idx = q.rem_euclid(n_os as i64) as usize;
                *v = self.curve[idx] / weight_sum;
            }
        }

        let peak_idx = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(window);
        let (offset, peak_value) = parabolic_peak(&values, peak_idx);
        let peak_lag = (peak_idx as f64 + offset - window as f64) / os as f64;

        Ok(CorrelationFunction {
            max_lag,
            oversample: os,
            values,
            peak_lag,
            peak_value,
        })
    }
}

/// Three-point parabolic interpolation around a discrete maximum.
/// Returns the fractional offset in grid units and the interpolated value.
fn parabolic_peak(values: &[f64], idx: usize) -> (f64, f64) {
    if idx == 0 || idx + 1 >= values.len() {
        return (0.0, values[idx]);
    }
    let (ym, y0, yp) = (values[idx - 1], values[idx], values[idx + 1]);
    let denom = ym - 2.0 * y0 + yp;
    if denom.abs() < 1e-30 {
        return (0.0, y0);
    }
    let offset = (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5);
    (offset, y0 - 0.25 * (ym - yp) * offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft, Window};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spectrum_of(x: &[f64]) -> Vec<Cpx> {
        stft(x, x.len(), x.len(), Window::Rect, 16000.0)
            .unwrap()
            .frame(0, 0)
            .to_vec()
    }

    #[test]
    fn identical_frames_peak_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = spectrum_of(&x);
        let mut gcc = GccPhat::new(1024, 2);
        let corr = gcc.correlate(&spec, &spec, 256).unwrap();
        assert!(corr.peak_lag.abs() < 1e-6, "lag {}", corr.peak_lag);
        assert!((corr.peak_value - 1.0).abs() < 1e-6, "value {}", corr.peak_value);
    }

    #[test]
    fn delayed_copy_recovers_positive_lag() {
        // Convention: positive lag means the second frame lags the first.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; 1024];
        b[7..].copy_from_slice(&a[..1024 - 7]);
        let mut gcc = GccPhat::new(1024, 2);
        let corr = gcc
            .correlate(&spectrum_of(&a), &spectrum_of(&b), 64)
            .unwrap();
        assert!((corr.peak_lag - 7.0).abs() < 0.05, "lag {}", corr.peak_lag);
    }

    #[test]
    fn independent_noise_has_low_peak() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gcc = GccPhat::new(1024, 2);
        let mut below = 0;
        let trials = 1000;
        for _ in 0..trials {
            let a: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
            let corr = gcc
                .correlate(&spectrum_of(&a), &spectrum_of(&b), 256)
                .unwrap();
            if corr.peak_value < 0.2 {
                below += 1;
            }
        }
        assert!(below >= trials * 95 / 100, "only {below}/{trials} below 0.2");
    }

    #[test]
    fn zero_frames_yield_zero_confidence() {
        let zero = vec![Cpx::new(0.0, 0.0); 513];
        let mut gcc = GccPhat::new(1024, 2);
        let corr = gcc.correlate(&zero, &zero, 100).unwrap();
        assert_eq!(corr.peak_value, 0.0);
    }

    #[test]
    fn fractional_delay_is_interpolated() {
        // Multitone signal evaluated at integer positions and at positions
        // shifted by 3.5 samples; the interpolated peak must land between
        // the integer lags.
        let n = 1024;
        let delay = 3.5;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tones: Vec<(f64, f64)> = (1..200)
            .map(|k| (k as f64 / n as f64, rng.random_range(0.0..std::f64::consts::TAU)))
            .collect();
        let sample = |t: f64| -> f64 {
            tones
                .iter()
                .map(|&(f, ph)| (std::f64::consts::TAU * f * t + ph).cos())
                .sum()
        };
        let a: Vec<f64> = (0..n).map(|i| sample(i as f64)).collect();
        let b: Vec<f64> = (0..n).map(|i| sample(i as f64 - delay)).collect();
        let mut gcc = GccPhat::new(n, 4);
        let corr = gcc
            .correlate(&spectrum_of(&a), &spectrum_of(&b), 32)
            .unwrap();
        assert!((corr.peak_lag - delay).abs() < 0.1, "lag {}", corr.peak_lag);
    }
}
