//! Diarization error rate with collar and optimal speaker mapping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diarize::SpeakerSegment;
use crate::error::{Error, Result};

/// DER components in seconds plus the rate itself.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DerResult {
    pub missed_s: f64,
    pub false_alarm_s: f64,
    pub confusion_s: f64,
    pub scored_s: f64,
    pub der_percent: f64,
}

impl DerResult {
    fn from_components(missed_s: f64, false_alarm_s: f64, confusion_s: f64, scored_s: f64) -> Self {
        Self {
            missed_s,
            false_alarm_s,
            confusion_s,
            scored_s,
            der_percent: (missed_s + false_alarm_s + confusion_s) / scored_s * 100.0,
        }
    }
}

/// NIST-style DER: a collar around every reference boundary is excluded
/// from scoring, overlap regions are scored, and hypothesis speakers are
/// mapped to reference speakers by the assignment maximizing attributed
/// time.
pub fn der(
    reference: &[SpeakerSegment],
    hypothesis: &[SpeakerSegment],
    collar_s: f64,
) -> Result<DerResult> {
    if reference.iter().all(|s| s.duration_s <= 0.0) {
        return Err(Error::NothingToScore);
    }

    let ref_speakers = speaker_ids(reference);
    let hyp_speakers = speaker_ids(hypothesis);

    // Elementary intervals from all boundaries (collar edges included).
    let mut edges: Vec<f64> = Vec::new();
    for s in reference {
        edges.push(s.onset_s - collar_s);
        edges.push(s.onset_s + collar_s);
        edges.push(s.onset_s + s.duration_s - collar_s);
        edges.push(s.onset_s + s.duration_s + collar_s);
    }
    for s in hypothesis {
        edges.push(s.onset_s);
        edges.push(s.onset_s + s.duration_s);
    }
    edges.retain(|e| e.is_finite());
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    // Active-speaker sets per elementary interval, with collar exclusion.
    struct Piece {
        duration: f64,
        refs: Vec<usize>,
        hyps: Vec<usize>,
    }
    let mut pieces = Vec::new();
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let duration = hi - lo;
        if duration <= 1e-9 {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let in_collar = reference.iter().any(|s| {
            (mid - s.onset_s).abs() < collar_s
                || (mid - (s.onset_s + s.duration_s)).abs() < collar_s
        });
        if in_collar {
            continue;
        }
        let refs: Vec<usize> = reference
            .iter()
            .filter(|s| mid > s.onset_s && mid < s.onset_s + s.duration_s)
            .map(|s| ref_speakers[&s.speaker])
            .collect();
        let hyps: Vec<usize> = hypothesis
            .iter()
            .filter(|s| mid > s.onset_s && mid < s.onset_s + s.duration_s)
            .map(|s| hyp_speakers[&s.speaker])
            .collect();
        if refs.is_empty() && hyps.is_empty() {
            continue;
        }
        pieces.push(Piece {
            duration,
            refs,
            hyps,
        });
    }

    // Overlap seconds between each (hyp, ref) speaker pair on scored time.
    let nr = ref_speakers.len();
    let nh = hyp_speakers.len();
    let mut overlap = vec![vec![0.0f64; nr]; nh];
    for p in &pieces {
        for &h in &p.hyps {
            for &r in &p.refs {
                overlap[h][r] += p.duration;
            }
        }
    }
    let mapping = best_assignment(&overlap, nr);

    let mut missed = 0.0;
    let mut false_alarm = 0.0;
    let mut confusion = 0.0;
    let mut scored = 0.0;
    for p in &pieces {
        let nref = p.refs.len() as f64;
        let nhyp = p.hyps.len() as f64;
        let correct = p
            .hyps
            .iter()
            .filter(|&&h| mapping[h].map_or(false, |r| p.refs.contains(&r)))
            .count() as f64;
        scored += p.duration * nref;
        missed += p.duration * (nref - nhyp).max(0.0);
        false_alarm += p.duration * (nhyp - nref).max(0.0);
        confusion += p.duration * (nref.min(nhyp) - correct).max(0.0);
    }
    if scored <= 0.0 {
        return Err(Error::NothingToScore);
    }
    Ok(DerResult::from_components(
        missed,
        false_alarm,
        confusion,
        scored,
    ))
}

/// Independent brute-force scorer at a fixed frame resolution; used to
/// cross-check the interval scorer.
pub fn der_frame_oracle(
    reference: &[SpeakerSegment],
    hypothesis: &[SpeakerSegment],
    collar_s: f64,
    step_s: f64,
) -> Result<DerResult> {
    if reference.iter().all(|s| s.duration_s <= 0.0) {
        return Err(Error::NothingToScore);
    }
    let ref_speakers = speaker_ids(reference);
    let hyp_speakers = speaker_ids(hypothesis);
    let end = reference
        .iter()
        .chain(hypothesis.iter())
        .map(|s| s.onset_s + s.duration_s)
        .fold(0.0f64, f64::max)
        + collar_s;
    let frames = (end / step_s).ceil() as usize + 1;

    let actives = |segments: &[SpeakerSegment], ids: &BTreeMap<String, usize>, t: f64| {
        segments
            .iter()
            .filter(|s| t > s.onset_s && t < s.onset_s + s.duration_s)
            .map(|s| ids[&s.speaker])
            .collect::<Vec<usize>>()
    };

    let mut cells: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for f in 0..frames {
        let t = (f as f64 + 0.5) * step_s;
        let in_collar = reference.iter().any(|s| {
            (t - s.onset_s).abs() < collar_s || (t - (s.onset_s + s.duration_s)).abs() < collar_s
        });
        if in_collar {
            continue;
        }
        cells.push((
            actives(reference, &ref_speakers, t),
            actives(hypothesis, &hyp_speakers, t),
        ));
    }

    let mut overlap = vec![vec![0.0f64; ref_speakers.len()]; hyp_speakers.len()];
    for (refs, hyps) in &cells {
        for &h in hyps {
            for &r in refs {
                overlap[h][r] += step_s;
            }
        }
    }
    let mapping = best_assignment(&overlap, ref_speakers.len());

    let (mut missed, mut false_alarm, mut confusion, mut scored) = (0.0, 0.0, 0.0, 0.0);
    for (refs, hyps) in &cells {
        let nref = refs.len() as f64;
        let nhyp = hyps.len() as f64;
        let correct = hyps
            .iter()
            .filter(|&&h| mapping[h].map_or(false, |r| refs.contains(&r)))
            .count() as f64;
        scored += step_s * nref;
        missed += step_s * (nref - nhyp).max(0.0);
        false_alarm += step_s * (nhyp - nref).max(0.0);
        confusion += step_s * (nref.min(nhyp) - correct).max(0.0);
    }
    if scored <= 0.0 {
        return Err(Error::NothingToScore);
    }
    Ok(DerResult::from_components(
        missed,
        false_alarm,
        confusion,
        scored,
    ))
}

fn speaker_ids(segments: &[SpeakerSegment]) -> BTreeMap<String, usize> {
    let mut ids = BTreeMap::new();
    for s in segments {
        let next = ids.len();
        ids.entry(s.speaker.clone()).or_insert(next);
    }
    ids
}

/// Exhaustive one-to-one assignment of hypothesis speakers to reference
/// speakers maximizing total overlap; feasible for the small speaker counts
/// of table meetings.
fn best_assignment(overlap: &[Vec<f64>], num_refs: usize) -> Vec<Option<usize>> {
    let nh = overlap.len();
    let mut best: (f64, Vec<Option<usize>>) = (-1.0, vec![None; nh]);
    let mut current: Vec<Option<usize>> = vec![None; nh];
    let mut used = vec![false; num_refs];

    fn recurse(
        h: usize,
        overlap: &[Vec<f64>],
        used: &mut [bool],
        current: &mut Vec<Option<usize>>,
        score: f64,
        best: &mut (f64, Vec<Option<usize>>),
    ) {
        if h == overlap.len() {
            if score > best.0 {
                *best = (score, current.clone());
            }
            return;
        }
        // Leave hypothesis speaker h unmapped.
        current[h] = None;
        recurse(h + 1, overlap, used, current, score, best);
        for r in 0..used.len() {
            if !used[r] && overlap[h][r] > 0.0 {
                used[r] = true;
                current[h] = Some(r);
                recurse(h + 1, overlap, used, current, score + overlap[h][r], best);
                current[h] = None;
                used[r] = false;
            }
        }
    }
    recurse(0, overlap, &mut used, &mut current, 0.0, &mut best);
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(speaker: &str, onset: f64, duration: f64) -> SpeakerSegment {
        SpeakerSegment {
            speaker: speaker.into(),
            onset_s: onset,
            duration_s: duration,
        }
    }

    #[test]
    fn identical_diaries_score_zero() {
        let r = vec![seg("a", 0.0, 5.0), seg("b", 6.0, 4.0)];
        let result = der(&r, &r, 0.25).unwrap();
        assert_eq!(result.der_percent, 0.0);
    }

    #[test]
    fn boundary_shifts_inside_the_collar_are_free() {
        let r = vec![seg("a", 1.0, 5.0), seg("b", 7.0, 4.0)];
        let h = vec![seg("x", 1.2, 5.0), seg("y", 7.2, 4.0)];
        let result = der(&r, &h, 0.25).unwrap();
        assert!(result.der_percent.abs() < 1e-9, "{result:?}");
    }

    #[test]
    fn silent_hypothesis_misses_everything() {
        let r = vec![seg("a", 1.0, 5.0)];
        let h: Vec<SpeakerSegment> = Vec::new();
        let result = der(&r, &h, 0.25).unwrap();
        assert!((result.der_percent - 100.0).abs() < 1e-9);
        // Scored time excludes the collar around both boundaries.
        assert!((result.scored_s - 4.5).abs() < 1e-6, "{result:?}");
    }

    #[test]
    fn relabeling_the_hypothesis_does_not_change_the_score() {
        let r = vec![seg("a", 0.0, 5.0), seg("b", 6.0, 4.0), seg("c", 11.0, 3.0)];
        let h1 = vec![seg("x", 0.0, 5.0), seg("y", 6.0, 4.0), seg("z", 11.0, 3.0)];
        let h2 = vec![seg("z", 0.0, 5.0), seg("x", 6.0, 4.0), seg("y", 11.0, 3.0)];
        let d1 = der(&r, &h1, 0.25).unwrap();
        let d2 = der(&r, &h2, 0.25).unwrap();
        assert!((d1.der_percent - d2.der_percent).abs() < 1e-12);
    }

    #[test]
    fn empty_reference_errors() {
        let h = vec![seg("a", 0.0, 1.0)];
        assert!(matches!(der(&[], &h, 0.25), Err(Error::NothingToScore)));
    }

    #[test]
    fn interval_scorer_matches_frame_oracle_on_random_diaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..50 {
            let mut reference = Vec::new();
            let mut hypothesis = Vec::new();
            let speakers = rng.random_range(2..5usize);
            for s in 0..speakers {
                let mut t = rng.random_range(0.0..3.0);
                while t < 50.0 {
                    let duration = rng.random_range(0.5..6.0);
                    reference.push(seg(&format!("r{s}"), t, duration));
                    // Hypothesis: jittered, sometimes relabeled or dropped.
                    if rng.random_range(0.0..1.0) > 0.15 {
                        let label = if rng.random_range(0.0..1.0) > 0.1 {
                            format!("h{s}")
                        } else {
                            format!("h{}", (s + 1) % speakers)
                        };
                        hypothesis.push(SpeakerSegment {
                            speaker: label,
                            onset_s: t + rng.random_range(-0.4..0.4),
                            duration_s: duration + rng.random_range(-0.3..0.3),
                        });
                    }
                    t += duration + rng.random_range(0.2..3.0);
                }
            }
            let fast = der(&reference, &hypothesis, 0.25).unwrap();
            let slow = der_frame_oracle(&reference, &hypothesis, 0.25, 0.01).unwrap();
            assert!(
                (fast.der_percent - slow.der_percent).abs() <= 0.5,
                "trial {trial}: interval {} vs frame {}",
                fast.der_percent,
                slow.der_percent
            );
        }
    }
}
