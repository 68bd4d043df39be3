//! Sampling time offset estimation via three-level clustering of
//! TDOA/TDOF value pairs.
//!
//! After SRO compensation the cross-array TDOA of an active speaker is the
//! geometric TDOF minus the STO. A least-squares fit over all frames would
//! let talkative speakers dominate; clustering frame pairs first by TDOA,
//! then by TDOF, turns every speaker position into one STO candidate
//! regardless of how much that speaker talked.

use crate::cluster::{cluster_1d, group_by_id};
use crate::config::SyncConfig;
use crate::dsp::{energy_vad, GccPhat, Spectrogram, Stft, Window};
use crate::error::{Error, Result};
use crate::spatial::DistanceProvider;
use crate::SPEED_OF_SOUND;

use super::sro::SroEstimate;

/// One frame's TDOA estimate paired with the TDOF from distance estimates.
#[derive(Debug, Clone, Copy)]
pub struct TdoaTdofPair {
    pub frame: usize,
    /// GCC-PhaT TDOA between the reference channels (s).
    pub tdoa_s: f64,
    /// Distance-derived time difference of flight (s).
    pub tdof_s: f64,
    /// GCC-PhaT peak value.
    pub confidence: f64,
}

/// Collect TDOA/TDOF pairs between the reference array and one other array.
///
/// Both inputs must be coarsely aligned; the analysis window of the lagging
/// stream is shifted by the accumulated SRO drift estimate, and the
/// remaining sub-sample drift is folded into the TDOA value.
pub fn collect_pairs(
    reference: &[f64],
    other: &[f64],
    sro: &SroEstimate,
    distances: &dyn DistanceProvider,
    other_array: usize,
    sample_rate: f64,
    cfg: &SyncConfig,
) -> Vec<TdoaTdofPair> {
    let frame_size = cfg.sto_frame_size;
    let frame_shift = cfg.sto_frame_shift;
    let len = reference.len().min(other.len());
    if len < frame_size {
        return Vec::new();
    }
    let frames = Spectrogram::frame_count(len, frame_size, frame_shift);
    // The voice activity decision runs on short frames (the long analysis
    // frames used for the TDOA estimate flatten the energy histogram and
    // starve the percentile noise floor); a long frame counts as voiced
    // when most of the short frames it covers are.
    let fine = 1024.min(frame_size);
    let fine_vad = energy_vad(&reference[..len], fine, fine / 4, cfg.vad_threshold_db);
    let fine_per_frame = frame_size / (fine / 4);
    let vad: Vec<bool> = (0..frames)
        .map(|l| {
            let start = l * frame_shift / (fine / 4);
            let end = (start + fine_per_frame).min(fine_vad.len());
            if start >= end {
                return false;
            }
            let active = fine_vad[start..end].iter().filter(|&&v| v).count();
            active * 2 >= end - start
        })
        .collect();
    let engine = Stft::new(frame_size, frame_size, Window::Hann);
    let mut gcc = GccPhat::new(frame_size, 2);

    let mut pairs = Vec::new();
    for l in 0..frames {
        if !vad[l] {
            continue;
        }
        let pos = l * frame_shift;
        let drift = sro.drift_at(pos);
        let shift = drift.round();
        let from = pos as i64 + shift as i64;
        if from < 0 || from as usize + frame_size > len {
            continue;
        }
        let seg_ref = &reference[pos..pos + frame_size];
        let seg_oth = &other[from as usize..from as usize + frame_size];
        let spec_ref = engine.forward(seg_ref, sample_rate).expect("frame length");
        let spec_oth = engine.forward(seg_oth, sample_rate).expect("frame length");
        let corr = gcc
            .correlate(
                spec_ref.frame(0, 0),
                spec_oth.frame(0, 0),
                cfg.sto_max_lag,
            )
            .expect("lag within range");
        if corr.peak_value < cfg.confidence_threshold {
            continue;
        }

        let time_s = (pos + frame_size / 2) as f64 / sample_rate;
        let (Some(d_other), Some(d_ref)) = (
            distances.distance(time_s, other_array),
            distances.distance(time_s, 0),
        ) else {
            continue;
        };
        let tdof_s = (d_other - d_ref) / SPEED_OF_SOUND;
        if tdof_s.abs() > 0.03 {
            continue;
        }
        // The integer window shift removed `shift` samples of drift; the
        // fractional remainder still biases the measured lag.
        let tdoa_s = (corr.peak_lag + (drift - shift)) / sample_rate;
        pairs.push(TdoaTdofPair {
            frame: l,
            tdoa_s,
            tdof_s,
            confidence: corr.peak_value,
        });
    }
    pairs
}

/// Result of the three-level clustering.
#[derive(Debug, Clone)]
pub struct StoEstimate {
    /// Estimated STO in seconds (relative to the aligned streams).
    pub sto_s: f64,
    /// All STO candidates that entered the final clustering.
    pub candidates: Vec<f64>,
    /// Candidate count of the winning cluster.
    pub support: usize,
}

/// Estimate the STO from TDOA/TDOF pairs.
///
/// Level 1 clusters pairs by TDOA, level 2 refines each cluster by TDOF,
/// and every (TDOA cluster, TDOF cluster) tuple contributes one candidate
/// `mean(tdof) - mean(tdoa)`. Level 3 clusters the candidates; the most
/// populated cluster wins (ties break toward the lowest variance) and its
/// median is returned.
pub fn estimate_sto(pairs: &[TdoaTdofPair], cfg: &SyncConfig) -> Result<StoEstimate> {
    if pairs.is_empty() {
        return Err(Error::NoObservations);
    }
    let confident: Vec<&TdoaTdofPair> = pairs
        .iter()
        .filter(|p| p.confidence >= cfg.confidence_threshold)
        .collect();
    if confident.is_empty() {
        return Err(Error::NoReliableObservations);
    }

    let tdoas: Vec<f64> = confident.iter().map(|p| p.tdoa_s).collect();
    let tau_ids = cluster_1d(&tdoas, cfg.tau_cluster_threshold_s);
    let mut candidates = Vec::new();
    for tau_members in group_by_id(&tau_ids) {
        if tau_members.is_empty() {
            continue;
        }
        let tdofs: Vec<f64> = tau_members.iter().map(|&i| confident[i].tdof_s).collect();
        let delta_ids = cluster_1d(&tdofs, cfg.delta_cluster_threshold_s);
        for delta_members in group_by_id(&delta_ids) {
            if delta_members.is_empty() {
                continue;
            }
            let mean_tdoa: f64 = delta_members
                .iter()
                .map(|&i| confident[tau_members[i]].tdoa_s)
                .sum::<f64>()
                / delta_members.len() as f64;
            let mean_tdof: f64 = delta_members
                .iter()
                .map(|&i| confident[tau_members[i]].tdof_s)
                .sum::<f64>()
                / delta_members.len() as f64;
            candidates.push(mean_tdof - mean_tdoa);
        }
    }

    let sto_ids = cluster_1d(&candidates, cfg.sto_cluster_threshold_s);
    let groups = group_by_id(&sto_ids);
    let winner = groups
        .iter()
        .max_by(|a, b| {
            a.len().cmp(&b.len()).then_with(|| {
                // Tie: prefer the cluster with the lowest internal variance.
                variance(&candidates, b)
                    .total_cmp(&variance(&candidates, a))
            })
        })
        .expect("at least one candidate cluster");

    let mut winning: Vec<f64> = winner.iter().map(|&i| candidates[i]).collect();
    winning.sort_by(f64::total_cmp);
    let sto_s = median_sorted(&winning);
    Ok(StoEstimate {
        sto_s,
        candidates,
        support: winner.len(),
    })
}

fn variance(values: &[f64], members: &[usize]) -> f64 {
    if members.len() < 2 {
        return 0.0;
    }
    let mean: f64 = members.iter().map(|&i| values[i]).sum::<f64>() / members.len() as f64;
    members
        .iter()
        .map(|&i| (values[i] - mean).powi(2))
        .sum::<f64>()
        / members.len() as f64
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
