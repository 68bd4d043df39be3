//! Single-speaker tracking from fused position estimates.

use super::diary::Diary;

/// Initial diary: a frame with a fused position estimate activates the
/// nearest calibrated speaker if it lies within `radius_m`.
pub fn track_single(
    localized: &[Option<[f64; 2]>],
    speakers: &[[f64; 2]],
    radius_m: f64,
    frame_shift_s: f64,
) -> Diary {
    let mut diary = Diary::new(speakers.len(), localized.len(), frame_shift_s);
    for (l, pos) in localized.iter().enumerate() {
        let Some(p) = pos else { continue };
        let nearest = speakers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let d = ((p[0] - s[0]).powi(2) + (p[1] - s[1]).powi(2)).sqrt();
                (i, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, d)) = nearest {
            if d <= radius_m {
                diary.activity[i][l] = true;
                diary.scores[i][l] = 1.0 - d / radius_m;
            }
        }
    }
    diary
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SPEAKERS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]];

    #[test]
    fn exact_position_activates_that_speaker() {
        let localized = vec![Some([1.0, 0.0])];
        let diary = track_single(&localized, &SPEAKERS, 0.5, 0.016);
        assert!(!diary.activity[0][0]);
        assert!(diary.activity[1][0]);
        assert!(!diary.activity[2][0]);
    }

    #[test]
    fn beyond_radius_nothing_is_active() {
        // Equidistant from all speakers, farther than the radius.
        let localized = vec![Some([0.5, 0.333 + 10.0])];
        let diary = track_single(&localized, &SPEAKERS, 0.5, 0.016);
        assert!(diary.activity.iter().all(|a| !a[0]));
    }

    #[test]
    fn noisy_single_speaker_frames_track_accurately() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut localized = Vec::new();
        let mut truth = Vec::new();
        for l in 0..3000 {
            let speaker = (l / 300) % 3;
            truth.push(speaker);
            let jitter = [
                rng.random_range(-0.15..0.15),
                rng.random_range(-0.15..0.15),
            ];
            localized.push(Some([
                SPEAKERS[speaker][0] + jitter[0],
                SPEAKERS[speaker][1] + jitter[1],
            ]));
        }
        let diary = track_single(&localized, &SPEAKERS, 0.5, 0.016);
        let correct = truth
            .iter()
            .enumerate()
            .filter(|&(l, &s)| diary.activity[s][l])
            .count();
        assert!(
            correct as f64 >= 0.95 * truth.len() as f64,
            "{correct}/{} frames correct",
            truth.len()
        );
    }
}
