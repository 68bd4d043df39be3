//! Scale-invariant signal-to-distortion ratio.

use crate::error::{Error, Result};

/// SI-SDR in dB after best-lag alignment within half a second.
///
/// The estimate is projected onto the reference (optimal scaling), so any
/// rescaling of the estimate leaves the value unchanged; (near-)exact
/// estimates are capped at `cap_db`.
pub fn si_sdr(
    reference: &[f64],
    estimate: &[f64],
    sample_rate: f64,
    cap_db: f64,
) -> Result<f64> {
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy <= 0.0 {
        return Err(Error::ZeroReference);
    }

    // Best integer lag by cross-correlation within +-fs/2 samples.
    let max_lag = (sample_rate / 2.0) as i64;
    let lag = best_lag(reference, estimate, max_lag);
    let len = reference.len().min(estimate.len());

    let mut dot = 0.0;
    let mut ref_sq = 0.0;
    let mut est_sq = 0.0;
    let mut cross = 0.0;
    let mut count = 0usize;
    for n in 0..len {
        let m = n as i64 + lag;
        if m < 0 || m as usize >= estimate.len() {
            continue;
        }
        let r = reference[n];
        let e = estimate[m as usize];
        dot += r * e;
        ref_sq += r * r;
        est_sq += e * e;
        cross += r * e;
        count += 1;
    }
    let _ = cross;
    if count == 0 || ref_sq <= 0.0 {
        return Err(Error::ZeroReference);
    }
    // Projection of the estimate onto the reference direction.
    let alpha = dot / ref_sq;
    let target_energy = alpha * alpha * ref_sq;
    let error_energy = est_sq - 2.0 * alpha * dot + target_energy;
    if error_energy <= target_energy * 10f64.powf(-cap_db / 10.0) {
        return Ok(cap_db);
    }
    Ok((10.0 * (target_energy / error_energy).log10()).min(cap_db))
}

fn best_lag(reference: &[f64], estimate: &[f64], max_lag: i64) -> i64 {
    use realfft::RealFftPlanner;
    let len = reference.len().max(estimate.len());
    let fft_size = (2 * len).next_power_of_two();
    let mut planner = RealFftPlanner::new();
    let fft = planner.plan_fft_forward(fft_size);
    let ifft = planner.plan_fft_inverse(fft_size);
    let mut a = vec![0.0; fft_size];
    a[..reference.len()].copy_from_slice(reference);
    let mut b = vec![0.0; fft_size];
    b[..estimate.len()].copy_from_slice(estimate);
    let bins = fft_size / 2 + 1;
    let mut sa = vec![crate::dsp::Cpx::new(0.0, 0.0); bins];
    let mut sb = vec![crate::dsp::Cpx::new(0.0, 0.0); bins];
    let mut scratch = fft.make_scratch_vec();
    fft.process_with_scratch(&mut a, &mut sa, &mut scratch).expect("fft");
    fft.process_with_scratch(&mut b, &mut sb, &mut scratch).expect("fft");
    for (x, y) in sa.iter_mut().zip(&sb) {
        *x = x.conj() * y;
    }
    let mut corr = vec![0.0; fft_size];
    let mut iscratch = ifft.make_scratch_vec();
    ifft.process_with_scratch(&mut sa, &mut corr, &mut iscratch)
        .expect("ifft");
    let mut best = (0i64, f64::MIN);
    for lag in -max_lag..=max_lag {
        let idx = lag.rem_euclid(fft_size as i64) as usize;
        if corr[idx] > best.1 {
            best = (lag, corr[idx]);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn exact_estimate_hits_the_cap() {
        let x = noise(16000, 1);
        assert_eq!(si_sdr(&x, &x, 16000.0, 60.0).unwrap(), 60.0);
    }

    #[test]
    fn scaling_is_free() {
        let x = noise(16000, 2);
        let half: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        assert_eq!(si_sdr(&x, &half, 16000.0, 60.0).unwrap(), 60.0);
    }

    #[test]
    fn equal_power_noise_gives_zero_db() {
        let x = noise(160000, 3);
        let n = noise(160000, 4);
        let rms_x = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        let rms_n = (n.iter().map(|v| v * v).sum::<f64>() / n.len() as f64).sqrt();
        let y: Vec<f64> = x.iter().zip(&n).map(|(a, b)| a + b * rms_x / rms_n).collect();
        let v = si_sdr(&x, &y, 16000.0, 60.0).unwrap();
        assert!(v.abs() <= 0.1, "{v} dB");
    }

    #[test]
    fn misaligned_estimate_is_realigned() {
        let x = noise(32000, 5);
        let mut shifted = vec![0.0; 32000];
        shifted[1000..].copy_from_slice(&x[..31000]);
        let v = si_sdr(&x, &shifted, 16000.0, 60.0).unwrap();
        assert!(v > 25.0, "{v} dB");
    }

    #[test]
    fn zero_reference_errors() {
        let x = vec![0.0; 1000];
        let y = noise(1000, 6);
        assert!(si_sdr(&x, &y, 16000.0, 60.0).is_err());
    }
}
