//! Overlap detection: add speakers whose grid power crosses the threshold.

use super::diary::Diary;

/// Add activity (never remove) for speakers whose accumulated grid power
/// exceeds `threshold_fraction` of the frame maximum, on frames that
/// already have a tracked speaker; frames below `power_floor` never add
/// anyone. Concurrency is capped at two by keeping the largest powers.
pub fn detect_overlap(
    diary: &Diary,
    powers: &[Vec<f64>],
    threshold_fraction: f64,
    power_floor: f64,
) -> Diary {
    let mut out = diary.clone();
    let frames = diary.frames().min(powers.len());
    for l in 0..frames {
        let any_active = (0..diary.num_speakers()).any(|i| diary.activity[i][l]);
        if !any_active {
            continue;
        }
        let frame_max = powers[l].iter().fold(0.0f64, |m, &v| m.max(v));
        let threshold = (threshold_fraction * frame_max).max(power_floor);
        for i in 0..out.num_speakers().min(powers[l].len()) {
            out.scores[i][l] = out.scores[i][l].max(powers[l][i]);
            if !out.activity[i][l] && powers[l][i] >= threshold {
                out.activity[i][l] = true;
            }
        }
        // Keep the two strongest by power.
        let mut active: Vec<usize> = (0..out.num_speakers())
            .filter(|&i| out.activity[i][l])
            .collect();
        if active.len() > 2 {
            active.sort_by(|&a, &b| powers[l][b].total_cmp(&powers[l][a]));
            for &i in &active[2..] {
                out.activity[i][l] = false;
            }
        }
    }
    out
}
