//! Energy-based voice activity detection.

use super::stft::Spectrogram;

/// Frame-wise activity decisions from frame energy against a noise floor.
///
/// The noise floor is the 10th percentile of the frame energies; a frame is
/// active iff its energy exceeds the floor by `threshold_db`. The signal
/// mean is removed first so a pure DC offset stays inactive.
pub fn energy_vad(
    signal: &[f64],
    frame_size: usize,
    frame_shift: usize,
    threshold_db: f64,
) -> Vec<bool> {
    let frames = Spectrogram::frame_count(signal.len(), frame_size, frame_shift);
    if frames == 0 {
        return Vec::new();
    }
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    let energies: Vec<f64> = (0..frames)
        .map(|l| {
            let start = l * frame_shift;
            signal[start..start + frame_size]
                .iter()
                .map(|&x| (x - mean) * (x - mean))
                .sum::<f64>()
                / frame_size as f64
        })
        .collect();

    let mut sorted = energies.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[(frames - 1) / 10];
    let gate = floor * 10f64.powf(threshold_db / 10.0);
    energies.iter().map(|&e| e > gate && e > 0.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn silence_is_inactive() {
        let x = vec![0.0; 16000];
        assert!(energy_vad(&x, 1024, 256, 10.0).iter().all(|&a| !a));
    }

    #[test]
    fn dc_offset_is_inactive() {
        let x = vec![0.7; 16000];
        assert!(energy_vad(&x, 1024, 256, 10.0).iter().all(|&a| !a));
    }

    #[test]
    fn bursts_match_activity_within_one_frame() {
        // 1 s noise bursts alternating with 1 s of near-silence.
        let fs = 16000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = Vec::with_capacity(8 * fs);
        for burst in 0..8 {
            for _ in 0..fs {
                let noise: f64 = rng.random_range(-1.0..1.0);
                x.push(if burst % 2 == 0 { noise } else { noise * 1e-4 });
            }
        }
        let (frame, shift) = (1024, 256);
        let vad = energy_vad(&x, frame, shift, 10.0);
        let mut mism = 0;
        for (l, &active) in vad.iter().enumerate() {
            let center = l * shift + frame / 2;
            let expected = (center / fs) % 2 == 0;
            // Allow one frame of slack at each burst boundary.
            let near_boundary = {
                let pos = center % fs;
                pos < frame || pos > fs - frame
            };
            if active != expected && !near_boundary {
                mism += 1;
            }
        }
        assert_eq!(mism, 0, "{mism} misclassified frames away from boundaries");
    }
}
