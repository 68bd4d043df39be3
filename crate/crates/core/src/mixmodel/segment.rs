//! Cutting a meeting into per-speaker segments from smoothed priors.

use super::cacgmm::MixtureState;

/// A target-speaker stretch of the meeting, in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    /// Exclusive end frame.
    pub end: usize,
    pub speaker: usize,
}

impl Segment {
    pub fn frames(&self) -> usize {
        self.end - self.start
    }
}

/// Segment the meeting: smooth the fitted priors with a moving average,
/// mark a speaker active where its prior exceeds half of the strongest
/// class, merge runs, and drop segments shorter than `min_segment_s`. The
/// noise class never yields segments.
pub fn segment(
    state: &MixtureState,
    smoothing_s: f64,
    min_segment_s: f64,
    frame_shift_s: f64,
) -> Vec<Segment> {
    let frames = state.frames;
    let classes = state.classes;
    let speakers = classes.saturating_sub(1);
    let window = ((smoothing_s / frame_shift_s).round() as usize).max(1);
    let min_frames = ((min_segment_s / frame_shift_s).round() as usize).max(1);

    // Moving-average smoothing of the priors per class.
    let mut smoothed = vec![0.0f64; frames * classes];
    for i in 0..classes {
        for l in 0..frames {
            let lo = l.saturating_sub(window / 2);
            let hi = (l + window / 2 + 1).min(frames);
            let mut acc = 0.0;
            for m in lo..hi {
                acc += state.prior(m, i);
            }
            smoothed[l * classes + i] = acc / (hi - lo) as f64;
        }
    }

    let mut out = Vec::new();
    for i in 0..speakers {
        let mut start: Option<usize> = None;
        for l in 0..=frames {
            let active = if l < frames {
                let max = (0..classes)
                    .map(|c| smoothed[l * classes + c])
                    .fold(f64::MIN, f64::max);
                smoothed[l * classes + i] > 0.5 * max
            } else {
                false
            };
            match (start, active) {
                (None, true) => start = Some(l),
                (Some(s), false) => {
                    if l - s >= min_frames {
                        out.push(Segment {
                            start: s,
                            end: l,
                            speaker: i,
                        });
                    }
                    start = None;
                }
                _ => {}
            }
        }
    }
    out.sort_by_key(|s| (s.start, s.speaker));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixmodel::MixtureState;

    fn state_with_priors(priors_by_frame: Vec<Vec<f64>>) -> MixtureState {
        let frames = priors_by_frame.len();
        let classes = priors_by_frame[0].len();
        let mut state = MixtureState::init_dirichlet(classes, 1.0, 0, frames, 1, 2);
        for (l, row) in priors_by_frame.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                state.priors[l * classes + i] = v;
            }
        }
        state
    }

    #[test]
    fn all_noise_yields_no_segments() {
        let state = state_with_priors(vec![vec![0.05, 0.05, 0.9]; 100]);
        assert!(segment(&state, 0.1, 0.3, 0.016).is_empty());
    }

    #[test]
    fn alternating_speakers_cut_near_the_truth() {
        // 2 s speaker 0, then 2 s speaker 1 (125 frames each at 16 ms).
        let mut priors = Vec::new();
        for l in 0..250 {
            if l < 125 {
                priors.push(vec![0.7, 0.05, 0.25]);
            } else {
                priors.push(vec![0.05, 0.7, 0.25]);
            }
        }
        let state = state_with_priors(priors);
        let segments = segment(&state, 0.2, 0.3, 0.016);
        assert_eq!(segments.len(), 2);
        assert_eq!(segments[0].speaker, 0);
        assert_eq!(segments[1].speaker, 1);
        let boundary_s = 125.0 * 0.016;
        assert!((segments[0].end as f64 * 0.016 - boundary_s).abs() <= 0.25);
        assert!((segments[1].start as f64 * 0.016 - boundary_s).abs() <= 0.25);
    }

    #[test]
    fn overlap_produces_two_concurrent_segments() {
        let mut priors = Vec::new();
        for l in 0..300 {
            let (a, b) = if l < 120 {
                (0.7, 0.05)
            } else if l < 180 {
                (0.4, 0.4)
            } else {
                (0.05, 0.7)
            };
            priors.push(vec![a, b, 1.0 - a - b]);
        }
        let state = state_with_priors(priors);
        let segments = segment(&state, 0.1, 0.3, 0.016);
        let s0: Vec<&Segment> = segments.iter().filter(|s| s.speaker == 0).collect();
        let s1: Vec<&Segment> = segments.iter().filter(|s| s.speaker == 1).collect();
        assert_eq!(s0.len(), 1);
        assert_eq!(s1.len(), 1);
        // Both cover the overlap region.
        assert!(s0[0].end > 130 && s1[0].start < 170);
    }

    #[test]
    fn short_blips_are_dropped() {
        let mut priors = vec![vec![0.05, 0.9, 0.05]; 100];
        for row in priors.iter_mut().take(52).skip(45) {
            *row = vec![0.9, 0.05, 0.05];
        }
        let state = state_with_priors(priors);
        let segments = segment(&state, 0.016, 0.3, 0.016);
        assert!(segments.iter().all(|s| s.speaker == 1), "{segments:?}");
    }
}
