//! STFT analysis and overlap-add synthesis.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use super::Cpx;
use crate::error::{Error, Result};

/// Analysis/synthesis taper.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Square-root periodic Hann; COLA with itself at 1/4 frame shift.
    SqrtHann,
    /// Periodic Hann.
    Hann,
    /// Rectangular.
    Rect,
}

impl Window {
    /// Window samples for a frame of `size` samples.
    pub fn taper(self, size: usize) -> Vec<f64> {
        (0..size)
            .map(|n| {
                let hann =
                    0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / size as f64).cos());
                match self {
                    Window::SqrtHann => hann.sqrt(),
                    Window::Hann => hann,
                    Window::Rect => 1.0,
                }
            })
            .collect()
    }
}

/// A multichannel complex spectrogram.
///
/// Values are stored frame-major per channel; bin count is
/// `frame_size / 2 + 1` as produced by a real-input FFT.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// Number of frames L.
    pub frames: usize,
    /// Number of frequency bins K.
    pub bins: usize,
    /// Number of channels.
    pub channels: usize,
    /// Analysis frame length in samples.
    pub frame_size: usize,
    /// Analysis frame shift in samples.
    pub frame_shift: usize,
    /// Sampling rate in Hz.
    pub sample_rate: f64,
    data: Vec<Cpx>,
}

impl Spectrogram {
    /// Allocate an all-zero spectrogram.
    pub fn zeros(
        frames: usize,
        bins: usize,
        channels: usize,
        frame_size: usize,
        frame_shift: usize,
        sample_rate: f64,
    ) -> Self {
        Self {
            frames,
            bins,
            channels,
            frame_size,
            frame_shift,
            sample_rate,
            data: vec![Cpx::new(0.0, 0.0); frames * bins * channels],
        }
    }

    /// Number of frames produced by framing a signal of `len` samples.
    pub fn frame_count(len: usize, frame_size: usize, frame_shift: usize) -> usize {
        if len < frame_size {
            0
        } else {
            (len - frame_size) / frame_shift + 1
        }
    }

    #[inline]
    fn index(&self, channel: usize, frame: usize) -> usize {
        (channel * self.frames + frame) * self.bins
    }

    /// One frame of one channel.
    #[inline]
    pub fn frame(&self, channel: usize, frame: usize) -> &[Cpx] {
        let i = self.index(channel, frame);
        &self.data[i..i + self.bins]
    }

    /// Mutable frame access.
    #[inline]
    pub fn frame_mut(&mut self, channel: usize, frame: usize) -> &mut [Cpx] {
        let i = self.index(channel, frame);
        &mut self.data[i..i + self.bins]
    }

    /// Time of a frame center in seconds.
    pub fn frame_center_s(&self, frame: usize) -> f64 {
        (frame as f64 * self.frame_shift as f64 + self.frame_size as f64 / 2.0) / self.sample_rate
    }

    /// Frame duration of the hop in seconds.
    pub fn frame_shift_s(&self) -> f64 {
        self.frame_shift as f64 / self.sample_rate
    }

    /// Stack the channels of several spectrograms into one.
    ///
    /// All inputs must share framing; the frame count is truncated to the
    /// shortest input.
    pub fn stack(parts: &[&Spectrogram]) -> Result<Spectrogram> {
        let first = parts.first().ok_or_else(|| {
            Error::Mismatch("cannot stack an empty spectrogram list".into())
        })?;
        let frames = parts.iter().map(|s| s.frames).min().unwrap_or(0);
        for s in parts {
            if s.bins != first.bins || s.frame_size != first.frame_size {
                return Err(Error::Mismatch("spectrogram framing differs".into()));
            }
        }
        let channels = parts.iter().map(|s| s.channels).sum();
        let mut out = Spectrogram::zeros(
            frames,
            first.bins,
            channels,
            first.frame_size,
            first.frame_shift,
            first.sample_rate,
        );
        let mut ch = 0;
        for s in parts {
            for c in 0..s.channels {
                for l in 0..frames {
                    out.frame_mut(ch, l).copy_from_slice(s.frame(c, l));
                }
                ch += 1;
            }
        }
        Ok(out)
    }
}

/// Reusable STFT analysis/synthesis engine for one framing configuration.
pub struct Stft {
    frame_size: usize,
    frame_shift: usize,
    window: Vec<f64>,
    fft: Arc<dyn RealToComplex<f64>>,
    ifft: Arc<dyn ComplexToReal<f64>>,
}

impl Stft {
    pub fn new(frame_size: usize, frame_shift: usize, window: Window) -> Self {
        let mut planner = RealFftPlanner::new();
        Self {
            frame_size,
            frame_shift,
            window: window.taper(frame_size),
            fft: planner.plan_fft_forward(frame_size),
            ifft: planner.plan_fft_inverse(frame_size),
        }
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn frame_shift(&self) -> usize {
        self.frame_shift
    }

    pub fn bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    /// Analyze one channel.
    pub fn forward(&self, signal: &[f64], sample_rate: f64) -> Result<Spectrogram> {
        self.forward_multi(&[signal], sample_rate)
    }

    /// Analyze multiple channels of equal length.
    pub fn forward_multi<S: AsRef<[f64]>>(
        &self,
        channels: &[S],
        sample_rate: f64,
    ) -> Result<Spectrogram> {
        let len = channels.first().map(|c| c.as_ref().len()).unwrap_or(0);
        if len < self.frame_size {
            return Err(Error::InsufficientSamples {
                needed: self.frame_size,
                got: len,
            });
        }
        let frames = Spectrogram::frame_count(len, self.frame_size, self.frame_shift);
        let mut out = Spectrogram::zeros(
            frames,
            self.bins(),
            channels.len(),
            self.frame_size,
            self.frame_shift,
            sample_rate,
        );
        let mut buf = vec![0.0; self.frame_size];
        let mut scratch = self.fft.make_scratch_vec();
        for (ch, signal) in channels.iter().enumerate() {
            let signal = signal.as_ref();
            if signal.len() != len {
                return Err(Error::Mismatch("channel lengths differ".into()));
            }
            for l in 0..frames {
                let start = l * self.frame_shift;
                for (b, (x, w)) in buf
                    .iter_mut()
                    .zip(signal[start..start + self.frame_size].iter().zip(&self.window))
                {
                    *b = x * w;
                }
                self.fft
                    .process_with_scratch(&mut buf, out.frame_mut(ch, l), &mut scratch)
                    .expect("fft size mismatch");
            }
        }
        Ok(out)
    }

    /// Overlap-add synthesis of one channel with window-sum normalization.
    ///
    /// For a COLA-compliant analysis/synthesis window pair the interior of
    /// the reconstruction is exact up to rounding.
    pub fn inverse(&self, spec: &Spectrogram, channel: usize) -> Vec<f64> {
        let out_len = (spec.frames.saturating_sub(1)) * self.frame_shift + self.frame_size;
        let mut out = vec![0.0; out_len];
        let mut norm = vec![0.0; out_len];
        let mut time = vec![0.0; self.frame_size];
        let mut freq = vec![Cpx::new(0.0, 0.0); self.bins()];
        let mut scratch = self.ifft.make_scratch_vec();
        let scale = 1.0 / self.frame_size as f64;
        for l in 0..spec.frames {
            freq.copy_from_slice(spec.frame(channel, l));
            // realfft requires a purely real DC/Nyquist pair.
            freq[0].im = 0.0;
            if self.frame_size % 2 == 0 {
                let last = freq.len() - 1;
                freq[last].im = 0.0;
            }
            self.ifft
                .process_with_scratch(&mut freq, &mut time, &mut scratch)
                .expect("ifft size mismatch");
            let start = l * self.frame_shift;
            for (n, (&t, &w)) in time.iter().zip(&self.window).enumerate() {
                out[start + n] += t * scale * w;
                norm[start + n] += w * w;
            }
        }
        for (o, &n) in out.iter_mut().zip(&norm) {
            if n > 1e-12 {
                *o /= n;
            }
        }
        out
    }
}

/// One-shot STFT of a single channel.
pub fn stft(
    signal: &[f64],
    frame_size: usize,
    frame_shift: usize,
    window: Window,
    sample_rate: f64,
) -> Result<Spectrogram> {
    Stft::new(frame_size, frame_shift, window).forward(signal, sample_rate)
}

/// One-shot inverse STFT of a single channel.
pub fn istft(spec: &Spectrogram, window: Window) -> Vec<f64> {
    Stft::new(spec.frame_size, spec.frame_shift, window).inverse(spec, 0)
}
