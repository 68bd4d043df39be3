//! The speaker diary: per-frame activity with raw scores, RTTM in and out,
//! and temporal smoothing.

use crate::error::{Error, Result};

/// Per-frame, per-speaker activity decisions plus the raw scores they came
/// from. At most two speakers are active per frame after smoothing.
#[derive(Debug, Clone)]
pub struct Diary {
    /// Frame shift in seconds.
    pub frame_shift_s: f64,
    /// `activity[speaker][frame]`.
    pub activity: Vec<Vec<bool>>,
    /// Raw score behind each decision (tracking weight or SRP power).
    pub scores: Vec<Vec<f64>>,
}

/// One contiguous labeled segment, the RTTM currency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerSegment {
    pub speaker: String,
    pub onset_s: f64,
    pub duration_s: f64,
}

impl Diary {
    pub fn new(speakers: usize, frames: usize, frame_shift_s: f64) -> Self {
        Self {
            frame_shift_s,
            activity: vec![vec![false; frames]; speakers],
            scores: vec![vec![0.0; frames]; speakers],
        }
    }

    pub fn num_speakers(&self) -> usize {
        self.activity.len()
    }

    pub fn frames(&self) -> usize {
        self.activity.first().map_or(0, |a| a.len())
    }

    /// Build a diary from labeled segments on a fixed frame grid.
    pub fn from_segments(
        segments: &[SpeakerSegment],
        speakers: usize,
        frames: usize,
        frame_shift_s: f64,
        label_to_index: impl Fn(&str) -> Option<usize>,
    ) -> Self {
        let mut diary = Diary::new(speakers, frames, frame_shift_s);
        for seg in segments {
            let Some(i) = label_to_index(&seg.speaker) else {
                continue;
            };
            for l in 0..frames {
                let center = (l as f64 + 0.5) * frame_shift_s;
                if center >= seg.onset_s && center < seg.onset_s + seg.duration_s {
                    diary.activity[i][l] = true;
                    diary.scores[i][l] = 1.0;
                }
            }
        }
        diary
    }

    /// Contiguous active runs per speaker as labeled segments.
    pub fn to_segments(&self) -> Vec<SpeakerSegment> {
        let mut out = Vec::new();
        for (i, series) in self.activity.iter().enumerate() {
            let mut start: Option<usize> = None;
            for l in 0..=series.len() {
                let active = l < series.len() && series[l];
                match (start, active) {
                    (None, true) => start = Some(l),
                    (Some(s), false) => {
                        out.push(SpeakerSegment {
                            speaker: format!("spk{i}"),
                            onset_s: s as f64 * self.frame_shift_s,
                            duration_s: (l - s) as f64 * self.frame_shift_s,
                        });
                        start = None;
                    }
                    _ => {}
                }
            }
        }
        out.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
        out
    }

    /// Serialize as RTTM SPEAKER lines.
    pub fn to_rttm(&self, file_id: &str) -> String {
        segments_to_rttm(&self.to_segments(), file_id)
    }

    /// Close gaps shorter than `min_gap_s`, then drop activity islands
    /// shorter than `min_on_s`, per speaker; finally cap concurrency at two
    /// speakers by score.
    pub fn smooth(&self, min_on_s: f64, min_gap_s: f64) -> Diary {
        let min_gap = (min_gap_s / self.frame_shift_s).round() as usize;
        let min_on = (min_on_s / self.frame_shift_s).round() as usize;
        let mut out = self.clone();
        for series in &mut out.activity {
            close_short_runs(series, false, min_gap);
            close_short_runs(series, true, min_on);
        }
        out.cap_concurrency(2);
        out
    }

    /// Keep at most `limit` concurrent speakers, preferring higher scores.
    pub fn cap_concurrency(&mut self, limit: usize) {
        let frames = self.frames();
        for l in 0..frames {
            let mut active: Vec<usize> = (0..self.num_speakers())
                .filter(|&i| self.activity[i][l])
                .collect();
            if active.len() <= limit {
                continue;
            }
            active.sort_by(|&a, &b| self.scores[b][l].total_cmp(&self.scores[a][l]));
            for &i in &active[limit..] {
                self.activity[i][l] = false;
            }
        }
    }

    /// Largest number of concurrently active speakers.
    pub fn max_concurrency(&self) -> usize {
        (0..self.frames())
            .map(|l| (0..self.num_speakers()).filter(|&i| self.activity[i][l]).count())
            .max()
            .unwrap_or(0)
    }
}

/// Flip runs of `value` shorter than `min_len` frames.
fn close_short_runs(series: &mut [bool], value: bool, min_len: usize) {
    let mut l = 0;
    while l < series.len() {
        if series[l] != value {
            l += 1;
            continue;
        }
        let start = l;
        while l < series.len() && series[l] == value {
            l += 1;
        }
        // Leading and trailing runs are left alone: only interior gaps can
        // be "closed", and edge islands are still islands.
        let interior_gap = !value || (start > 0 && l < series.len());
        let is_island = value;
        if l - start < min_len && (is_island || interior_gap) {
            for s in &mut series[start..l] {
                *s = !value;
            }
        }
    }
}

/// Render labeled segments as RTTM SPEAKER lines.
pub fn segments_to_rttm(segments: &[SpeakerSegment], file_id: &str) -> String {
    segments
        .iter()
        .map(|s| {
            format!(
                "SPEAKER {file_id} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
                s.onset_s, s.duration_s, s.speaker
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parse RTTM SPEAKER lines into segments.
pub fn parse_rttm(content: &str) -> Result<Vec<SpeakerSegment>> {
    let mut out = Vec::new();
    for (no, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 8 || fields[0] != "SPEAKER" {
            return Err(Error::Mismatch(format!(
                "rttm line {} is not a SPEAKER record",
                no + 1
            )));
        }
        let onset: f64 = fields[3]
            .parse()
            .map_err(|_| Error::Mismatch(format!("bad onset on line {}", no + 1)))?;
        let duration: f64 = fields[4]
            .parse()
            .map_err(|_| Error::Mismatch(format!("bad duration on line {}", no + 1)))?;
        out.push(SpeakerSegment {
            speaker: fields[7].to_string(),
            onset_s: onset,
            duration_s: duration,
        });
    }
    Ok(out)
}
