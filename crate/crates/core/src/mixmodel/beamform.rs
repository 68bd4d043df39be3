//! Mask-driven MVDR beamforming per segment.

use crate::dsp::{Cpx, Spectrogram, Stft, Window};
use crate::error::{Error, Result};

use super::cmat::CMat;

/// Extract one speaker from a segment of the stacked multichannel
/// spectrogram.
///
/// Target and distortion spatial covariances are mask-weighted outer
/// products over the segment; the filter is the distortion-whitened
/// covariance column (MVDR in its Souden form) of the reference channel
/// with the largest expected SNR gain. The filtered spectrum is converted
/// back to a waveform by overlap-add.
///
/// Masks index `[(l - segment_start) * bins + k]`.
pub fn beamform(
    obs: &Spectrogram,
    target_mask: &[f64],
    distortion_mask: &[f64],
    segment: std::ops::Range<usize>,
    diagonal_loading: f64,
) -> Result<Vec<f64>> {
    let dim = obs.channels;
    let bins = obs.bins;
    if segment.end > obs.frames || segment.is_empty() {
        return Err(Error::Mismatch(format!(
            "segment {segment:?} outside the {} spectrogram frames",
            obs.frames
        )));
    }
    let span = segment.len();
    if target_mask.len() < span * bins || distortion_mask.len() < span * bins {
        return Err(Error::Mismatch("mask lengths do not cover the segment".into()));
    }

    let mut output = Spectrogram::zeros(
        span,
        bins,
        1,
        obs.frame_size,
        obs.frame_shift,
        obs.sample_rate,
    );

    // Accumulate per-bin covariances.
    let mut y = vec![Cpx::new(0.0, 0.0); dim];
    let mut weights: Vec<Vec<Cpx>> = vec![Vec::new(); bins];
    let mut snr_num = vec![0.0f64; dim];
    let mut snr_den = vec![0.0f64; dim];
    let mut per_bin: Vec<(CMat, CMat)> = Vec::with_capacity(bins);
    for k in 0..bins {
        let mut phi_t = CMat::zeros(dim);
        let mut phi_d = CMat::zeros(dim);
        for (rel, l) in segment.clone().enumerate() {
            for (d, v) in y.iter_mut().enumerate() {
                *v = obs.frame(d, l)[k];
            }
            let mt = target_mask[rel * bins + k];
            let md = distortion_mask[rel * bins + k];
            if mt > 0.0 {
                phi_t.add_scaled_outer(&y, mt);
            }
            if md > 0.0 {
                phi_d.add_scaled_outer(&y, md);
            }
        }
        let load = diagonal_loading * phi_d.trace().max(phi_t.trace()).max(1e-12);
        phi_d.add_diagonal(load / dim as f64);
        per_bin.push((phi_t, phi_d));
    }

    // Candidate filters per reference channel; pick the reference with the
    // best expected SNR gain summed over frequency.
    for (k, (phi_t, phi_d)) in per_bin.iter().enumerate() {
        let Some((inv_d, _)) = phi_d.inverse_logdet() else {
            return Err(Error::Mismatch(format!(
                "distortion covariance not invertible at bin {k}"
            )));
        };
        let w_full = inv_d.mul_mat(phi_t);
        let trace = (0..dim).map(|i| w_full[(i, i)].re).sum::<f64>();
        let scale = if trace.abs() > 1e-12 { 1.0 / trace } else { 0.0 };
        for r in 0..dim {
            let w: Vec<Cpx> = (0..dim).map(|i| w_full[(i, r)] * scale).collect();
            let num = phi_t.quadratic_form(&w);
            let den = phi_d.quadratic_form(&w).max(1e-12);
            snr_num[r] += num;
            snr_den[r] += den;
        }
        weights[k] = (0..dim * dim).map(|i| w_full.data[i] * scale).collect();
    }
    let reference = (0..dim)
        .max_by(|&a, &b| {
            (snr_num[a] / snr_den[a].max(1e-12)).total_cmp(&(snr_num[b] / snr_den[b].max(1e-12)))
        })
        .unwrap_or(0);

    for (rel, l) in segment.clone().enumerate() {
        for k in 0..bins {
            for (d, v) in y.iter_mut().enumerate() {
                *v = obs.frame(d, l)[k];
            }
            let mut acc = Cpx::new(0.0, 0.0);
            for d in 0..dim {
                // Column `reference` of the whitened covariance is the
                // filter; apply its conjugate transpose to the snapshot.
                acc += weights[k][d * dim + reference].conj() * y[d];
            }
            output.frame_mut(0, rel)[k] = acc;
        }
    }

    let engine = Stft::new(obs.frame_size, obs.frame_shift, Window::SqrtHann);
    Ok(engine.inverse(&output, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::stft;
    use crate::evaluate::si_sdr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FS: f64 = 16000.0;

    fn speechish(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pole = (-std::f64::consts::TAU * 500.0 / FS).exp();
        let mut state = 0.0;
        (0..len)
            .map(|_| {
                let w: f64 = rng.random_range(-1.0..1.0);
                state = pole * state + (1.0 - pole) * w;
                state * 3.0
            })
            .collect()
    }

    /// Multichannel mixture of delayed copies plus white noise.
    fn mixture(
        sources: &[(&[f64], [f64; 4])],
        noise_level: f64,
        len: usize,
        seed: u64,
    ) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..4)
            .map(|ch| {
                (0..len)
                    .map(|n| {
                        let mut acc = 0.0;
                        for (sig, delays) in sources {
                            let d = delays[ch];
                            let idx = n as f64 - d;
                            let i = idx.floor() as i64;
                            let frac = idx - i as f64;
                            if i >= 0 && (i as usize + 1) < sig.len() {
                                acc += sig[i as usize] * (1.0 - frac)
                                    + sig[i as usize + 1] * frac;
                            }
                        }
                        acc + noise_level * rng.random_range(-1.0..1.0)
                    })
                    .collect()
            })
            .collect()
    }

    fn stacked(channels: &[Vec<f64>]) -> Spectrogram {
        let engine = Stft::new(1024, 256, Window::SqrtHann);
        engine.forward_multi(channels, FS).unwrap()
    }

    #[test]
    fn oracle_masks_beat_the_best_input_channel() {
        let len = 4 * 16000;
        let target = speechish(len, 1);
        let interferer = speechish(len, 2);
        let channels = mixture(
            &[
                (&target, [0.0, 1.3, 2.1, 3.4]),
                (&interferer, [2.9, 0.4, 1.8, 0.9]),
            ],
            0.02,
            len,
            3,
        );
        let spec = stacked(&channels);
        let frames = spec.frames;
        let bins = spec.bins;

        // Oracle-ish masks from the clean sources' spectra.
        let t_spec = stft(&target, 1024, 256, Window::SqrtHann, FS).unwrap();
        let i_spec = stft(&interferer, 1024, 256, Window::SqrtHann, FS).unwrap();
        let mut mt = vec![0.0; frames * bins];
        let mut md = vec![0.0; frames * bins];
        for l in 0..frames {
            for k in 0..bins {
                let pt = t_spec.frame(0, l)[k].norm_sqr();
                let pi = i_spec.frame(0, l)[k].norm_sqr();
                let denom = pt + pi + 1e-12;
                mt[l * bins + k] = pt / denom;
                md[l * bins + k] = (pi + 1e-12) / denom;
            }
        }
        let out = beamform(&spec, &mt, &md, 0..frames, 1e-6).unwrap();

        let best_input = channels
            .iter()
            .map(|ch| si_sdr(&target, ch, FS, 60.0).unwrap())
            .fold(f64::MIN, f64::max);
        let enhanced = si_sdr(&target, &out, FS, 60.0).unwrap();
        assert!(
            enhanced >= best_input + 5.0,
            "enhanced {enhanced:.2} dB vs best input {best_input:.2} dB"
        );
    }

    #[test]
    fn all_target_mask_passes_the_source_through() {
        let len = 2 * 16000;
        let target = speechish(len, 4);
        let channels = mixture(&[(&target, [0.0, 0.8, 1.6, 2.4])], 1e-4, len, 5);
        let spec = stacked(&channels);
        let frames = spec.frames;
        let bins = spec.bins;
        let mt = vec![1.0; frames * bins];
        let md = vec![0.0; frames * bins];
        let out = beamform(&spec, &mt, &md, 0..frames, 1e-6).unwrap();

        // Correlation with the selected reference channel stays near one;
        // the reference choice among equal-SNR channels is free.
        let corr = channels
            .iter()
            .map(|ch| {
                let n = out.len().min(ch.len());
                let a = &out[1024..n - 1024];
                let b = &ch[1024..n - 1024];
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                dot / (na * nb)
            })
            .fold(f64::MIN, f64::max);
        assert!(corr >= 0.99, "correlation {corr}");
    }

    #[test]
    fn segment_outside_frames_errors() {
        let channels = mixture(&[(&speechish(8192, 6), [0.0, 1.0, 2.0, 3.0])], 0.0, 8192, 7);
        let spec = stacked(&channels);
        let masks = vec![1.0; spec.frames * spec.bins];
        assert!(beamform(&spec, &masks, &masks, 0..spec.frames + 10, 1e-6).is_err());
    }
}
