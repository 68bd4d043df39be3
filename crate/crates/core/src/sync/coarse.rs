//! Coarse alignment from the cross-correlation of the leading signal parts.

use realfft::RealFftPlanner;

use crate::dsp::Cpx;

/// Result of the coarse alignment.
#[derive(Debug, Clone, Copy)]
pub struct CoarseAlignment {
    /// Lag maximizing the cross-correlation: positive when `other` is a
    /// delayed copy of `ref`.
    pub lag: i64,
    pub peak: f64,
    pub noise_floor: f64,
    /// Set when the peak is less than three times the correlation noise
    /// floor; the lag is still usable but should be treated with care.
    pub weak: bool,
}

/// Lag between two streams from the full cross-correlation over their first
/// `window_s` seconds.
pub fn coarse_sync(
    reference: &[f64],
    other: &[f64],
    window_s: f64,
    sample_rate: f64,
) -> CoarseAlignment {
    let window = ((window_s * sample_rate) as usize)
        .min(reference.len())
        .min(other.len());
    let fft_size = (2 * window).next_power_of_two();
    let mut planner = RealFftPlanner::new();
    let fft = planner.plan_fft_forward(fft_size);
    let ifft = planner.plan_fft_inverse(fft_size);

    let mut a = vec![0.0; fft_size];
    a[..window].copy_from_slice(&reference[..window]);
    let mut b = vec![0.0; fft_size];
    b[..window].copy_from_slice(&other[..window]);

    let bins = fft_size / 2 + 1;
    let mut spec_a = vec![Cpx::new(0.0, 0.0); bins];
    let mut spec_b = vec![Cpx::new(0.0, 0.0); bins];
    let mut scratch = fft.make_scratch_vec();
    fft.process_with_scratch(&mut a, &mut spec_a, &mut scratch)
        .expect("fft size mismatch");
    fft.process_with_scratch(&mut b, &mut spec_b, &mut scratch)
        .expect("fft size mismatch");
    for (sa, sb) in spec_a.iter_mut().zip(&spec_b) {
        *sa = sa.conj() * sb;
    }
    let mut corr = vec![0.0; fft_size];
    let mut iscratch = ifft.make_scratch_vec();
    ifft.process_with_scratch(&mut spec_a, &mut corr, &mut iscratch)
        .expect("ifft size mismatch");

    // corr[m mod fft_size] holds sum_n ref[n] * other[n + m]; a delayed
    // copy other[n] = ref[n - L] peaks at m = L.
    let max_lag = window as i64 - 1;
    let mut best = (0i64, f64::MIN);
    for lag in -max_lag..=max_lag {
        let idx = lag.rem_euclid(fft_size as i64) as usize;
        let v = corr[idx];
        if v > best.1 {
            best = (lag, v);
        }
    }
    // Noise floor: the strongest correlation well away from the peak. For
    // genuinely related streams the true peak dominates every spurious one.
    let exclusion = (0.1 * sample_rate) as i64;
    let mut floor = 0.0f64;
    for lag in -max_lag..=max_lag {
        if (lag - best.0).abs() <= exclusion {
            continue;
        }
        let idx = lag.rem_euclid(fft_size as i64) as usize;
        floor = floor.max(corr[idx].abs());
    }
    CoarseAlignment {
        lag: best.0,
        peak: best.1,
        noise_floor: floor,
        weak: best.1 < 3.0 * floor,
    }
}

/// Advance a stream by `lag` samples (positive skips the beginning,
/// negative prepends zeros); output keeps the input length.
pub fn advance(signal: &[f64], lag: i64) -> Vec<f64> {
    let mut out = vec![0.0; signal.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let idx = n as i64 + lag;
        if idx >= 0 && (idx as usize) < signal.len() {
            *o = signal[idx as usize];
        }
    }
    out
}
