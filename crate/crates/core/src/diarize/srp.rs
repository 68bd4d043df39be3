//! Steered response power with phase transform, accumulated on small grids
//! around the calibrated speaker positions.
//!
//! Synchronization residuals leave small time shifts between arrays, so
//! each speaker is scanned over a grid of candidate positions rather than a
//! single point; the grid powers are summed per speaker.

use crate::dsp::{GccPhat, Spectrogram};
use crate::error::{Error, Result};
use crate::SPEED_OF_SOUND;

/// Candidate positions around one speaker estimate.
#[derive(Debug, Clone)]
pub struct SrpGrid {
    pub speaker: usize,
    pub points: Vec<[f64; 2]>,
}

impl SrpGrid {
    /// A square grid centered on the speaker estimate.
    pub fn around(speaker: usize, center: [f64; 2], points_per_edge: usize, spacing_m: f64) -> Self {
        let half = (points_per_edge as f64 - 1.0) / 2.0;
        let mut points = Vec::with_capacity(points_per_edge * points_per_edge);
        for ix in 0..points_per_edge {
            for iy in 0..points_per_edge {
                points.push([
                    center[0] + (ix as f64 - half) * spacing_m,
                    center[1] + (iy as f64 - half) * spacing_m,
                ]);
            }
        }
        Self { speaker, points }
    }
}

/// Accumulated steered response power per frame and speaker grid.
///
/// For every microphone pair the GCC-PhaT is evaluated (with sub-sample
/// interpolation) at the lag of the theoretical time difference of flight
/// for each grid point; powers are averaged over pairs and grid points so
/// a perfectly coherent source yields values near one.
///
/// Channel `c` of the stacked spectrogram belongs to array
/// `array_of_channel[c]` and sits at `mic_positions[c]`.
pub fn srp_phat_power(
    stacked: &Spectrogram,
    mic_positions: &[[f64; 2]],
    array_of_channel: &[usize],
    grids: &[SrpGrid],
    all_pairs: bool,
    sample_rate: f64,
) -> Result<Vec<Vec<f64>>> {
    if mic_positions.len() != stacked.channels || array_of_channel.len() != stacked.channels {
        return Err(Error::MissingGeometry(format!(
            "{} channels vs {} microphone positions",
            stacked.channels,
            mic_positions.len()
        )));
    }
    let frame_size = stacked.frame_size;

    // Pair selection: everything, or first channels across arrays only.
    let first_of_array: Vec<usize> = {
        let mut seen = Vec::new();
        let mut firsts = Vec::new();
        for (c, &a) in array_of_channel.iter().enumerate() {
            if !seen.contains(&a) {
                seen.push(a);
                firsts.push(c);
            }
        }
        firsts
    };
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..stacked.channels {
        for j in (i + 1)..stacked.channels {
            let cross_first = first_of_array.contains(&i)
                && first_of_array.contains(&j)
                && array_of_channel[i] != array_of_channel[j];
            if all_pairs || cross_first {
                pairs.push((i, j));
            }
        }
    }
    if pairs.is_empty() || grids.is_empty() {
        return Err(Error::MissingGeometry("no microphone pairs or grids".into()));
    }

    // Lags per (pair, grid, point) and per-pair lag windows.
    let mut pair_lags: Vec<Vec<Vec<f64>>> = Vec::with_capacity(pairs.len());
    let mut pair_max_lag: Vec<usize> = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let (pa, pb) = (mic_positions[i], mic_positions[j]);
        let mut per_grid = Vec::with_capacity(grids.len());
        let mut max_abs = 0.0f64;
        for grid in grids {
            let lags: Vec<f64> = grid
                .points
                .iter()
                .map(|u| {
                    let da = ((u[0] - pa[0]).powi(2) + (u[1] - pa[1]).powi(2)).sqrt();
                    let db = ((u[0] - pb[0]).powi(2) + (u[1] - pb[1]).powi(2)).sqrt();
                    let lag = (db - da) / SPEED_OF_SOUND * sample_rate;
                    max_abs = max_abs.max(lag.abs());
                    lag
                })
                .collect();
            per_grid.push(lags);
        }
        pair_lags.push(per_grid);
        let window = (max_abs.ceil() as usize + 4).min(frame_size / 2 - 1);
        pair_max_lag.push(window);
    }

    let frames = stacked.frames;
    let mut gcc = GccPhat::new(frame_size, 2);
    let mut powers = vec![vec![0.0f64; grids.len()]; frames];
    let norm = 1.0 / pairs.len() as f64;
    for (l, row) in powers.iter_mut().enumerate() {
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let corr = gcc.correlate(
                stacked.frame(i, l),
                stacked.frame(j, l),
                pair_max_lag[p],
            )?;
            for (g, lags) in pair_lags[p].iter().enumerate() {
                let mut acc = 0.0;
                for &lag in lags {
                    acc += corr.value_at(lag);
                }
                row[g] += acc / lags.len() as f64;
            }
        }
        for v in row.iter_mut() {
            *v *= norm;
        }
    }
    Ok(powers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Window;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FS: f64 = 16000.0;

    fn mic_layouts() -> Vec<Vec<[f64; 2]>> {
        let square = |cx: f64, cy: f64| -> Vec<[f64; 2]> {
            vec![
                [cx + 0.025, cy + 0.025],
                [cx - 0.025, cy + 0.025],
                [cx - 0.025, cy - 0.025],
                [cx + 0.025, cy - 0.025],
            ]
        };
        vec![square(0.0, 0.0), square(1.5, 0.4), square(0.6, 1.3)]
    }

    /// Free-field sound field for point sources, exact fractional delays.
    fn render_field(
        mics: &[Vec<[f64; 2]>],
        sources: &[([f64; 2], u64)],
        len: usize,
    ) -> Vec<Vec<Vec<f64>>> {
        mics.iter()
            .map(|array| {
                array
                    .iter()
                    .map(|m| {
                        let mut out = vec![0.0; len];
                        for &(src, seed) in sources {
                            let mut rng = ChaCha8Rng::seed_from_u64(seed);
                            let tones: Vec<(f64, f64)> = (1..300)
                                .map(|k| {
                                    (
                                        k as f64 * 25.0,
                                        rng.random_range(0.0..std::f64::consts::TAU),
                                    )
                                })
                                .collect();
                            let d = ((src[0] - m[0]).powi(2) + (src[1] - m[1]).powi(2)).sqrt();
                            let delay = d / SPEED_OF_SOUND * FS;
                            for (n, o) in out.iter_mut().enumerate() {
                                let t = n as f64 - delay;
                                *o += tones
                                    .iter()
                                    .map(|&(f, ph)| {
                                        (std::f64::consts::TAU * f * t / FS + ph).sin()
                                    })
                                    .sum::<f64>()
                                    / (tones.len() as f64).sqrt();
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect()
    }

    fn stacked_spec(field: &[Vec<Vec<f64>>]) -> (Spectrogram, Vec<usize>) {
        let engine = crate::dsp::Stft::new(1024, 256, Window::SqrtHann);
        let flat: Vec<&Vec<f64>> = field.iter().flatten().collect();
        let channels: Vec<&[f64]> = flat.iter().map(|v| v.as_slice()).collect();
        let spec = engine.forward_multi(&channels, FS).unwrap();
        let arrays: Vec<usize> = field
            .iter()
            .enumerate()
            .flat_map(|(a, chans)| std::iter::repeat(a).take(chans.len()))
            .collect();
        (spec, arrays)
    }

    fn flat_mics(mics: &[Vec<[f64; 2]>]) -> Vec<[f64; 2]> {
        mics.iter().flatten().copied().collect()
    }

    fn grids_for(speakers: &[[f64; 2]]) -> Vec<SrpGrid> {
        speakers
            .iter()
            .enumerate()
            .map(|(i, &s)| SrpGrid::around(i, s, 5, 0.04))
            .collect()
    }

    const SPK: [[f64; 2]; 3] = [[2.0, 2.0], [-1.0, 1.5], [1.0, -1.5]];

    #[test]
    fn single_source_peaks_at_its_grid() {
        let mics = mic_layouts();
        let field = render_field(&mics, &[(SPK[0], 1)], 8192);
        let (spec, arrays) = stacked_spec(&field);
        let powers =
            srp_phat_power(&spec, &flat_mics(&mics), &arrays, &grids_for(&SPK), true, FS)
                .unwrap();
        for row in &powers {
            assert!(row[0] > row[1] && row[0] > row[2], "{row:?}");
        }
    }

    #[test]
    fn silence_stays_below_the_floor() {
        let mics = mic_layouts();
        let field: Vec<Vec<Vec<f64>>> = mics
            .iter()
            .map(|a| a.iter().map(|_| vec![0.0; 4096]).collect())
            .collect();
        let (spec, arrays) = stacked_spec(&field);
        let powers =
            srp_phat_power(&spec, &flat_mics(&mics), &arrays, &grids_for(&SPK), true, FS)
                .unwrap();
        for row in &powers {
            assert!(row.iter().all(|&p| p < 0.05), "{row:?}");
        }
    }

    #[test]
    fn two_sources_both_exceed_half_of_the_maximum() {
        let mics = mic_layouts();
        let field = render_field(&mics, &[(SPK[0], 2), (SPK[1], 3)], 8192);
        let (spec, arrays) = stacked_spec(&field);
        let powers =
            srp_phat_power(&spec, &flat_mics(&mics), &arrays, &grids_for(&SPK), true, FS)
                .unwrap();
        let mut hits = 0;
        for row in &powers {
            let max = row.iter().fold(0.0f64, |m, &v| m.max(v));
            if row[0] >= 0.5 * max && row[1] >= 0.5 * max {
                hits += 1;
            }
        }
        assert!(
            hits as f64 >= 0.7 * powers.len() as f64,
            "{hits}/{} frames with both speakers above threshold",
            powers.len()
        );
    }

    #[test]
    fn rigid_transform_leaves_powers_unchanged() {
        let mics = mic_layouts();
        let field = render_field(&mics, &[(SPK[0], 4)], 4096);
        let (spec, arrays) = stacked_spec(&field);
        let powers =
            srp_phat_power(&spec, &flat_mics(&mics), &arrays, &grids_for(&SPK), true, FS)
                .unwrap();

        // Rotate and translate microphones and grids together; the TDOFs
        // depend only on distances, so nothing may change.
        let ang = 0.7f64;
        let (s, c) = ang.sin_cos();
        let mv = |p: [f64; 2]| [c * p[0] - s * p[1] + 3.0, s * p[0] + c * p[1] - 1.0];
        let mics2: Vec<Vec<[f64; 2]>> = mics
            .iter()
            .map(|a| a.iter().map(|&p| mv(p)).collect())
            .collect();
        let grids2: Vec<SrpGrid> = grids_for(&SPK)
            .into_iter()
            .map(|g| SrpGrid {
                speaker: g.speaker,
                points: g.points.into_iter().map(mv).collect(),
            })
            .collect();
        let powers2 =
            srp_phat_power(&spec, &flat_mics(&mics2), &arrays, &grids2, true, FS).unwrap();
        for (a, b) in powers.iter().zip(&powers2) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn first_channel_mode_uses_cross_array_pairs_only() {
        let mics = mic_layouts();
        let field = render_field(&mics, &[(SPK[0], 5)], 4096);
        let (spec, arrays) = stacked_spec(&field);
        let powers =
            srp_phat_power(&spec, &flat_mics(&mics), &arrays, &grids_for(&SPK), false, FS)
                .unwrap();
        for row in &powers {
            assert!(row[0] > row[1] && row[0] > row[2], "{row:?}");
        }
    }
}
