//! End-to-end orchestration: simulate, synchronize, calibrate, diarize,
//! separate and evaluate, with reproducible on-disk artifacts.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ArrayMode, InitMode, PipelineConfig, SyncMode};
use crate::diarize::{
    detect_overlap, srp_phat_power, track_single, Diary, SpeakerSegment, SrpGrid,
};
use crate::dsp::{Spectrogram, Stft, Window};
use crate::error::{Error, Result};
use crate::evaluate::{der, si_sdr, sync_error, DerResult, MeetingMetrics, MetricsTable};
use crate::mixmodel::{beamform, em_fit, segment, MixtureState, Observations, Segment};
use crate::simulate::{
    render_meeting, sample_scenario, AsyncRecordingSet, DirUtteranceSource, GroundTruth,
    Scenario, SpeechShapedNoiseSource, UtteranceSource, SRO_TRACE_SHIFT,
};
use crate::spatial::{
    calibrate_geometry, collect_observations, localized_series, ArrayPlacement,
    LocalObservation, NetworkGeometry, OracleDistance,
};
use crate::sync::{
    estimate_clock, oracle_clock, synchronize, ClockEstimate, CoarseAlignment, SyncReport,
};

/// One simulated meeting held in memory.
pub struct MeetingData {
    pub id: String,
    pub scenario: Scenario,
    pub recordings: AsyncRecordingSet,
    pub truth: GroundTruth,
}

/// Simulate one meeting from the config's distributions.
pub fn simulate_meeting(index: usize, cfg: &PipelineConfig) -> Result<MeetingData> {
    let seed = cfg.seed.wrapping_add(index as u64);
    let scenario = sample_scenario(seed, &cfg.simulate)?;
    let mut source: Box<dyn UtteranceSource> = match &cfg.simulate.utterance_dir {
        Some(dir) => Box::new(DirUtteranceSource::open(
            Path::new(dir),
            cfg.simulate.sample_rate,
        )?),
        None => Box::new(SpeechShapedNoiseSource::new(cfg.simulate.sample_rate as f64)),
    };
    let (recordings, truth) = render_meeting(&scenario, source.as_mut(), &cfg.simulate)?;
    Ok(MeetingData {
        id: format!("meeting_{index:03}"),
        scenario,
        recordings,
        truth,
    })
}

/// One enhanced segment ready for export.
pub struct EnhancedSegment {
    pub speaker: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub samples: Vec<f64>,
    pub si_sdr_db: Option<f64>,
}

/// Everything a processed meeting produces.
pub struct MeetingOutcome {
    pub metrics: MeetingMetrics,
    pub sync_reports: Vec<SyncReport>,
    pub clocks: Vec<ClockEstimate>,
    pub geometry: Option<NetworkGeometry>,
    pub diary: Diary,
    pub reference: Vec<SpeakerSegment>,
    pub der: Option<DerResult>,
    pub enhanced: Vec<EnhancedSegment>,
    pub em_iterations: Option<usize>,
    pub mean_si_sdr_db: Option<f64>,
}

/// Reference segments ("ref<i>") from the ground-truth utterances.
pub fn reference_segments(truth: &GroundTruth) -> Vec<SpeakerSegment> {
    truth
        .utterances
        .iter()
        .map(|u| SpeakerSegment {
            speaker: format!("ref{}", u.speaker),
            onset_s: u.onset_s,
            duration_s: u.offset_s - u.onset_s,
        })
        .collect()
}

fn label(mode_sync: SyncMode) -> &'static str {
    match mode_sync {
        SyncMode::Estimated => "est",
        SyncMode::CoarseOnly => "coarse",
        SyncMode::Oracle => "perfect",
    }
}

fn label_init(mode: InitMode) -> &'static str {
    match mode {
        InitMode::Informed => "est",
        InitMode::Dirichlet => "dirichlet",
        InitMode::OracleDiary => "oracle",
    }
}

/// Run the configured front-end on one meeting.
pub fn process_meeting(data: &MeetingData, cfg: &PipelineConfig) -> Result<MeetingOutcome> {
    match cfg.arrays {
        ArrayMode::Multi => process_multi(data, cfg),
        ArrayMode::Single(j) => process_single(data, cfg, j),
    }
}

fn process_multi(data: &MeetingData, cfg: &PipelineConfig) -> Result<MeetingOutcome> {
    let fs = data.recordings.sample_rate;
    let stft_cfg = &cfg.stft;
    let frame_shift_s = stft_cfg.frame_shift as f64 / fs;
    let num_arrays = data.recordings.arrays.len();
    let frames_total = data.recordings.arrays[0].channels[0].len() / stft_cfg.frame_shift;

    let distances = OracleDistance::new(
        &data.scenario,
        &data.truth,
        cfg.spatial.distance_noise_sigma,
        data.scenario.seed ^ 0xd157,
    );

    // Clock estimation.
    let reference_channel = data.recordings.arrays[0].channels[0].clone();
    let mut clocks = Vec::with_capacity(num_arrays);
    let mut single_source_mask: Option<Vec<bool>> = None;
    for j in 0..num_arrays {
        let clock = if j == 0 {
            ClockEstimate::reference(0, frames_total, stft_cfg.frame_shift)
        } else {
            match cfg.sync {
                SyncMode::Oracle => oracle_clock(&data.truth.clocks[j], fs),
                SyncMode::CoarseOnly => {
                    let coarse: CoarseAlignment = crate::sync::coarse_sync(
                        &reference_channel,
                        &data.recordings.arrays[j].channels[0],
                        cfg.sync_params.coarse_window_s,
                        fs,
                    );
                    let mut clock =
                        ClockEstimate::reference(j, frames_total, stft_cfg.frame_shift);
                    clock.coarse_lag = coarse.lag;
                    clock.weak_coarse = coarse.weak;
                    // Only the coarse shift is compensated.
                    clock.sto_seconds = -(coarse.lag as f64) / fs;
                    clock
                }
                SyncMode::Estimated => {
                    let clock = estimate_clock(
                        &reference_channel,
                        &data.recordings.arrays[j].channels[0],
                        &distances,
                        j,
                        fs,
                        &cfg.sync_params,
                        stft_cfg.frame_shift,
                    )
                    .map_err(|e| e.in_stage("sync"))?;
                    // Frames contributing confident pairs are single-source
                    // by construction; they gate the calibration input.
                    let mask = pair_frame_mask(
                        &reference_channel,
                        data,
                        &clock,
                        &distances,
                        j,
                        fs,
                        cfg,
                        frames_total,
                    );
                    // A confident single-peak pair on any array marks the
                    // frame as single-source.
                    match &mut single_source_mask {
                        Some(existing) => {
                            for (a, b) in existing.iter_mut().zip(&mask) {
                                *a = *a || *b;
                            }
                        }
                        None => single_source_mask = Some(mask),
                    }
                    clock
                }
            }
        };
        clocks.push(clock);
    }

    let synced = synchronize(&data.recordings, &clocks).map_err(|e| e.in_stage("sync"))?;
    let sync_reports: Vec<SyncReport> = clocks.iter().map(SyncReport::from_clock).collect();

    // Observations per array on the synchronized signals; tracking uses
    // all voiced frames, while calibration is restricted to frames the
    // synchronizer identified as single-source.
    let mut observations: Vec<LocalObservation> = Vec::new();
    for (j, array) in synced.iter().enumerate() {
        let obs = collect_observations(
            j,
            &array.channels,
            &distances,
            None,
            &cfg.spatial,
            stft_cfg,
            data.scenario.array_edge_m,
            fs,
        )
        .map_err(|e| e.in_stage("spatial"))?;
        observations.extend(obs);
    }
    let calibration_obs: Vec<LocalObservation> = match &single_source_mask {
        Some(mask) => observations
            .iter()
            .filter(|o| o.frame < mask.len() && mask[o.frame])
            .copied()
            .collect(),
        None => observations.clone(),
    };

    // Geometry: calibrated, or ground truth in the reference gauge for the
    // oracle variant.
    let geometry = match cfg.sync {
        SyncMode::Oracle => NetworkGeometry::oracle_from_scenario(&data.scenario),
        _ => calibrate_geometry(&calibration_obs, num_arrays, &cfg.spatial)
            .map_err(|e| e.in_stage("spatial"))?,
    };

    // Diarization.
    let stacked = stacked_spectrogram(&synced, stft_cfg, fs)?;
    let frames = stacked.frames;
    let localized = localized_series(&observations, &geometry, frames);
    let initial = track_single(
        &localized,
        &geometry.speakers,
        cfg.diarize.track_radius_m,
        frame_shift_s,
    );
    let mic_positions: Vec<[f64; 2]> = (0..num_arrays)
        .flat_map(|j| {
            geometry.mic_positions(j, data.scenario.mics_per_array, data.scenario.array_edge_m)
        })
        .collect();
    let array_of_channel: Vec<usize> = (0..num_arrays)
        .flat_map(|j| std::iter::repeat(j).take(data.scenario.mics_per_array))
        .collect();
    let grids: Vec<SrpGrid> = geometry
        .speakers
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            SrpGrid::around(i, s, cfg.diarize.srp_grid_points, cfg.diarize.srp_grid_spacing_m)
        })
        .collect();
    let powers = srp_phat_power(
        &stacked,
        &mic_positions,
        &array_of_channel,
        &grids,
        cfg.diarize.srp_all_pairs,
        fs,
    )
    .map_err(|e| e.in_stage("diarize"))?;
    let with_overlap = detect_overlap(
        &initial,
        &powers,
        cfg.diarize.overlap_threshold,
        cfg.diarize.power_floor,
    );
    let diary = with_overlap.smooth(cfg.diarize.min_on_s, cfg.diarize.min_gap_s);

    finish_meeting(data, cfg, stacked, diary, geometry.speakers.clone(), {
        let mut m = MeetingMetrics::new(data.id.clone(), "multi");
        m.sync = label(cfg.sync).into();
        m.init = label_init(cfg.init).into();
        let errors = sync_error(&data.truth.clocks, &clocks, fs, cfg.evaluate.sro_burn_in_s)?;
        let non_ref: Vec<_> = errors.iter().skip(1).collect();
        if !non_ref.is_empty() {
            m.sto_error_ms = Some(
                non_ref.iter().map(|e| e.sto_error_ms).sum::<f64>() / non_ref.len() as f64,
            );
            m.sro_mean_abs_ppm = Some(
                non_ref.iter().map(|e| e.sro_mean_abs_ppm).sum::<f64>() / non_ref.len() as f64,
            );
        }
        m
    }, sync_reports, clocks, Some(geometry))
}

/// Single compact array: no synchronization or global calibration; the
/// diary comes from clustering the array's own local position estimates.
fn process_single(data: &MeetingData, cfg: &PipelineConfig, j: usize) -> Result<MeetingOutcome> {
    let fs = data.recordings.sample_rate;
    let stft_cfg = &cfg.stft;
    let frame_shift_s = stft_cfg.frame_shift as f64 / fs;
    let distances = OracleDistance::new(
        &data.scenario,
        &data.truth,
        cfg.spatial.distance_noise_sigma,
        data.scenario.seed ^ 0xd157,
    );

    let channels = &data.recordings.arrays[j].channels;
    let observations = collect_observations(
        j,
        channels,
        &distances,
        None,
        &cfg.spatial,
        stft_cfg,
        data.scenario.array_edge_m,
        fs,
    )
    .map_err(|e| e.in_stage("spatial"))?;

    // Cluster local positions into speaker candidates.
    let points: Vec<[f64; 2]> = observations.iter().map(|o| o.local_position()).collect();
    let ids = crate::cluster::cluster_2d(&points, cfg.spatial.speaker_cluster_threshold_m);
    let groups = crate::cluster::group_by_id(&ids);
    let mut speakers: Vec<[f64; 2]> = Vec::new();
    for members in groups {
        if members.len() < cfg.spatial.min_cluster_frames {
            continue;
        }
        let mut xs: Vec<f64> = members.iter().map(|&i| points[i][0]).collect();
        let mut ys: Vec<f64> = members.iter().map(|&i| points[i][1]).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        speakers.push([xs[xs.len() / 2], ys[ys.len() / 2]]);
    }
    speakers.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    if speakers.is_empty() {
        return Err(Error::UnderDeterminedCalibration(0).in_stage("spatial"));
    }

    let local_geometry = NetworkGeometry {
        arrays: vec![ArrayPlacement::identity()],
        speakers: speakers.clone(),
    };
    let stacked = {
        let engine = Stft::new(stft_cfg.frame_size, stft_cfg.frame_shift, Window::SqrtHann);
        engine.forward_multi(channels, fs)?
    };
    let frames = stacked.frames;
    let localized = localized_series(&observations, &local_geometry, frames);
    let initial = track_single(
        &localized,
        &speakers,
        cfg.diarize.track_radius_m,
        frame_shift_s,
    );
    let diary = initial.smooth(cfg.diarize.min_on_s, cfg.diarize.min_gap_s);

    let mut metrics = MeetingMetrics::new(data.id.clone(), format!("single:{j}"));
    metrics.sync = "-".into();
    metrics.init = label_init(cfg.init).into();
    finish_meeting(
        data,
        cfg,
        stacked,
        diary,
        speakers,
        metrics,
        Vec::new(),
        Vec::new(),
        None,
    )
}

/// Shared tail of both variants: score the diary, run the mixture model
/// and beamformer, and measure separation quality.
#[allow(clippy::too_many_arguments)]
fn finish_meeting(
    data: &MeetingData,
    cfg: &PipelineConfig,
    stacked: Spectrogram,
    diary: Diary,
    speaker_positions: Vec<[f64; 2]>,
    mut metrics: MeetingMetrics,
    sync_reports: Vec<SyncReport>,
    clocks: Vec<ClockEstimate>,
    geometry: Option<NetworkGeometry>,
) -> Result<MeetingOutcome> {
    let fs = data.recordings.sample_rate;
    let frame_shift_s = stacked.frame_shift as f64 / fs;
    let reference = reference_segments(&data.truth);
    let der_result = der(&reference, &diary.to_segments(), cfg.evaluate.der_collar_s)
        .map_err(|e| e.in_stage("evaluate"))?;
    metrics.set_der(&der_result);

    let mut enhanced = Vec::new();
    let mut em_iterations = None;
    let mut mean_si_sdr = None;
    if !cfg.skip_separation {
        let frames = stacked.frames;
        let bins = stacked.bins;
        let dim = stacked.channels;
        let init_diary = match cfg.init {
            InitMode::OracleDiary => oracle_diary(&data.truth, frames, frame_shift_s, fs),
            _ => resample_diary(&diary, frames),
        };
        let classes = init_diary.num_speakers() + 1;
        let state = match cfg.init {
            InitMode::Dirichlet => MixtureState::init_dirichlet(
                classes,
                cfg.mixmodel.dirichlet_alpha,
                data.scenario.seed ^ 0xd12c,
                frames,
                bins,
                dim,
            ),
            _ => MixtureState::init_informed(
                &init_diary,
                cfg.mixmodel.activity_floor,
                frames,
                bins,
                dim,
            ),
        };
        let obs = Observations::from_spectrogram(&stacked);
        let fitted = em_fit(&obs, state, &cfg.mixmodel).map_err(|e| e.in_stage("mixmodel"))?;
        em_iterations = Some(fitted.iterations_run);
        let segments = segment(
            &fitted,
            cfg.mixmodel.segment_smoothing_s,
            cfg.mixmodel.min_segment_s,
            frame_shift_s,
        );
        enhanced = separate_segments(
            &stacked,
            &obs,
            &fitted,
            &segments,
            data,
            cfg,
            frame_shift_s,
        )?;
        mean_si_sdr = duration_weighted_sdr(&enhanced);
        metrics.si_sdr_db = mean_si_sdr;
        metrics.em_iterations = em_iterations;
    }

    let _ = speaker_positions;
    Ok(MeetingOutcome {
        metrics,
        sync_reports,
        clocks,
        geometry,
        diary,
        reference,
        der: Some(der_result),
        enhanced,
        em_iterations,
        mean_si_sdr_db: mean_si_sdr,
    })
}

/// Beamform each segment and attribute classes to true speakers by the
/// assignment maximizing duration-weighted SI-SDR; the same attribution is
/// used for informed and uninformed initializations.
fn separate_segments(
    stacked: &Spectrogram,
    obs: &Observations,
    fitted: &MixtureState,
    segments: &[Segment],
    data: &MeetingData,
    cfg: &PipelineConfig,
    frame_shift_s: f64,
) -> Result<Vec<EnhancedSegment>> {
    let fs = data.recordings.sample_rate;
    let bins = stacked.bins;
    let classes = fitted.classes;
    let speakers = classes - 1;
    let num_true = data.truth.speaker_refs.len();

    struct Rendered {
        segment: Segment,
        samples: Vec<f64>,
        sdr_by_true: Vec<Option<f64>>,
    }
    let mut rendered = Vec::new();
    for seg in segments {
        let range = seg.start..seg.end;
        let masks = fitted.posterior_masks(obs, range.clone());
        let span = range.len();
        let target = masks[seg.speaker].clone();
        let mut distortion = vec![0.0; span * bins];
        for (i, mask) in masks.iter().enumerate() {
            if i == seg.speaker {
                continue;
            }
            for (d, &m) in distortion.iter_mut().zip(mask) {
                *d += m;
            }
        }
        let samples = beamform(
            stacked,
            &target,
            &distortion,
            range.clone(),
            cfg.mixmodel.diagonal_loading,
        )
        .map_err(|e| e.in_stage("mixmodel"))?;

        let start_sample = (seg.start as f64 * frame_shift_s * fs) as usize;
        let end_sample =
            ((seg.end as f64 * frame_shift_s * fs) as usize).min(data.truth.speaker_refs[0].len());
        let sdr_by_true: Vec<Option<f64>> = (0..num_true)
            .map(|i| {
                let reference = &data.truth.speaker_refs[i];
                if start_sample >= end_sample || end_sample > reference.len() {
                    return None;
                }
                let slice = &reference[start_sample..end_sample];
                let energy: f64 = slice.iter().map(|v| v * v).sum();
                if energy < 1e-9 {
                    return None;
                }
                si_sdr(slice, &samples, fs, cfg.evaluate.si_sdr_cap_db).ok()
            })
            .collect();
        rendered.push(Rendered {
            segment: *seg,
            samples,
            sdr_by_true,
        });
    }

    // Global class -> true speaker assignment by duration-weighted SI-SDR.
    let mut score = vec![vec![0.0f64; num_true]; speakers];
    for r in &rendered {
        let dur = r.segment.frames() as f64;
        for (i, sdr) in r.sdr_by_true.iter().enumerate() {
            if let Some(v) = sdr {
                score[r.segment.speaker][i] += dur * v;
            }
        }
    }
    let assignment = best_permutation(&score);

    Ok(rendered
        .into_iter()
        .map(|r| {
            let sdr = assignment[r.segment.speaker].and_then(|t| r.sdr_by_true[t]);
            EnhancedSegment {
                speaker: r.segment.speaker,
                start_s: r.segment.start as f64 * frame_shift_s,
                end_s: r.segment.end as f64 * frame_shift_s,
                samples: r.samples,
                si_sdr_db: sdr,
            }
        })
        .collect())
}

fn duration_weighted_sdr(enhanced: &[EnhancedSegment]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for e in enhanced {
        if let Some(s) = e.si_sdr_db {
            let d = e.end_s - e.start_s;
            num += d * s;
            den += d;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Exhaustive injective assignment of classes to true speakers maximizing
/// the summed score.
fn best_permutation(score: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = score.len();
    let m = score.first().map_or(0, |r| r.len());
    let mut best = (f64::MIN, vec![None; n]);
    let mut current = vec![None; n];
    let mut used = vec![false; m];
    fn recurse(
        c: usize,
        score: &[Vec<f64>],
        used: &mut [bool],
        current: &mut Vec<Option<usize>>,
        total: f64,
        best: &mut (f64, Vec<Option<usize>>),
    ) {
        if c == score.len() {
            if total > best.0 {
                *best = (total, current.clone());
            }
            return;
        }
        current[c] = None;
        recurse(c + 1, score, used, current, total, best);
        for t in 0..used.len() {
            if !used[t] {
                used[t] = true;
                current[c] = Some(t);
                recurse(c + 1, score, used, current, total + score[c][t], best);
                current[c] = None;
                used[t] = false;
            }
        }
    }
    recurse(0, score, &mut used, &mut current, 0.0, &mut best);
    best.1
}

/// Diary from ground-truth activity on the analysis grid.
fn oracle_diary(truth: &GroundTruth, frames: usize, frame_shift_s: f64, fs: f64) -> Diary {
    let speakers = truth.activity.len();
    let mut diary = Diary::new(speakers, frames, frame_shift_s);
    for (i, series) in truth.activity.iter().enumerate() {
        for l in 0..frames {
            let sample = (l as f64 * frame_shift_s * fs) as usize;
            let idx = sample / SRO_TRACE_SHIFT;
            if idx < series.len() && series[idx] {
                diary.activity[i][l] = true;
                diary.scores[i][l] = 1.0;
            }
        }
    }
    diary
}

/// Clip or extend a diary onto the stacked spectrogram's frame count.
fn resample_diary(diary: &Diary, frames: usize) -> Diary {
    let mut out = Diary::new(diary.num_speakers(), frames, diary.frame_shift_s);
    for i in 0..diary.num_speakers() {
        for l in 0..frames.min(diary.frames()) {
            out.activity[i][l] = diary.activity[i][l];
            out.scores[i][l] = diary.scores[i][l];
        }
    }
    out
}

/// Frames whose confident TDOA pairs mark them as single-source, on the
/// analysis grid.
#[allow(clippy::too_many_arguments)]
fn pair_frame_mask(
    reference: &[f64],
    data: &MeetingData,
    clock: &ClockEstimate,
    distances: &OracleDistance,
    array: usize,
    fs: f64,
    cfg: &PipelineConfig,
    frames_total: usize,
) -> Vec<bool> {
    let aligned = crate::sync::advance_signal(
        &data.recordings.arrays[array].channels[0],
        clock.coarse_lag,
    );
    let sro = crate::sync::SroEstimate {
        ppm: clock.sro_ppm.clone(),
        frame_shift: clock.sro_frame_shift,
        held: clock.sro_held,
    };
    let pairs = crate::sync::collect_pairs(
        reference,
        &aligned,
        &sro,
        distances,
        array,
        fs,
        &cfg.sync_params,
    );
    let mut mask = vec![false; frames_total];
    let ratio = cfg.sync_params.sto_frame_shift / cfg.stft.frame_shift;
    for p in &pairs {
        let start = p.frame * ratio;
        for l in start..(start + cfg.sync_params.sto_frame_size / cfg.stft.frame_shift) {
            if l < frames_total {
                mask[l] = true;
            }
        }
    }
    mask
}

fn stacked_spectrogram(
    synced: &[crate::simulate::ArrayRecording],
    stft_cfg: &crate::config::StftConfig,
    fs: f64,
) -> Result<Spectrogram> {
    let engine = Stft::new(stft_cfg.frame_size, stft_cfg.frame_shift, Window::SqrtHann);
    let channels: Vec<&[f64]> = synced
        .iter()
        .flat_map(|a| a.channels.iter().map(|c| c.as_slice()))
        .collect();
    engine.forward_multi(&channels, fs)
}

// ---------------------------------------------------------------------------
// On-disk runs.

/// Files written for one meeting, listed in its manifest.
#[derive(Debug, Serialize, Deserialize)]
pub struct MeetingManifest {
    pub meeting: String,
    pub files: Vec<String>,
}

/// Run-level manifest: one entry per meeting manifest plus summary files.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub meetings: Vec<String>,
    pub files: Vec<String>,
}

/// Enhanced-audio manifest entry.
#[derive(Debug, Serialize, Deserialize)]
pub struct EnhancedEntry {
    pub file: String,
    pub speaker: usize,
    pub start_s: f64,
    pub end_s: f64,
}

/// Outcome of a full run.
pub struct RunSummary {
    pub table: MetricsTable,
    pub failures: Vec<(String, String)>,
}

/// Process every meeting of the config and write artifacts under `out_dir`.
///
/// Failing meetings leave a failure marker file and do not stop the run;
/// the summary lists them.
pub fn run(cfg: &PipelineConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("run_config.json"),
        serde_json::to_string_pretty(cfg)?,
    )?;

    let outcomes: Vec<(String, Result<(MeetingOutcome, MeetingData)>)> = (0..cfg
        .simulate
        .num_meetings)
        .into_par_iter()
        .map(|index| {
            let id = format!("meeting_{index:03}");
            let result = simulate_meeting(index, cfg)
                .and_then(|data| process_meeting(&data, cfg).map(|o| (o, data)));
            (id, result)
        })
        .collect();

    let mut table = MetricsTable::default();
    let mut failures = Vec::new();
    let mut meeting_manifests = Vec::new();
    for (id, result) in outcomes {
        let meeting_dir = out_dir.join("meetings").join(&id);
        std::fs::create_dir_all(&meeting_dir)?;
        match result {
            Ok((outcome, data)) => {
                let manifest = write_meeting_artifacts(&meeting_dir, &outcome, &data)?;
                meeting_manifests.push(format!("meetings/{id}/manifest.json"));
                let _ = manifest;
                table.rows.push(outcome.metrics);
            }
            Err(err) => {
                std::fs::write(meeting_dir.join("FAILED.txt"), format!("{err}\n"))?;
                failures.push((id, err.to_string()));
            }
        }
    }

    std::fs::write(out_dir.join("metrics.csv"), table.to_csv())?;
    std::fs::write(out_dir.join("summary.csv"), table.summary_csv())?;
    let run_manifest = RunManifest {
        meetings: meeting_manifests,
        files: vec![
            "run_config.json".into(),
            "metrics.csv".into(),
            "summary.csv".into(),
        ],
    };
    std::fs::write(
        out_dir.join("run_manifest.json"),
        serde_json::to_string_pretty(&run_manifest)?,
    )?;
    Ok(RunSummary { table, failures })
}

fn write_meeting_artifacts(
    dir: &Path,
    outcome: &MeetingOutcome,
    data: &MeetingData,
) -> Result<MeetingManifest> {
    let mut files = Vec::new();
    let fs = data.recordings.sample_rate;

    std::fs::write(
        dir.join("scenario.json"),
        serde_json::to_string_pretty(&data.scenario)?,
    )?;
    files.push("scenario.json".into());

    std::fs::write(
        dir.join("sync_report.jsonl"),
        SyncReport::to_jsonl(&outcome.sync_reports) + "\n",
    )?;
    files.push("sync_report.jsonl".into());

    if !outcome.clocks.is_empty() {
        std::fs::write(
            dir.join("clocks.json"),
            serde_json::to_string(&outcome.clocks)?,
        )?;
        files.push("clocks.json".into());
    }

    if let Some(geometry) = &outcome.geometry {
        std::fs::write(
            dir.join("geometry.json"),
            serde_json::to_string_pretty(geometry)?,
        )?;
        files.push("geometry.json".into());
    }

    std::fs::write(
        dir.join("hypothesis.rttm"),
        outcome.diary.to_rttm(&data.id) + "\n",
    )?;
    files.push("hypothesis.rttm".into());
    std::fs::write(
        dir.join("reference.rttm"),
        crate::diarize::segments_to_rttm(&outcome.reference, &data.id) + "\n",
    )?;
    files.push("reference.rttm".into());

    if !outcome.enhanced.is_empty() {
        let enhanced_dir = dir.join("enhanced");
        std::fs::create_dir_all(&enhanced_dir)?;
        let mut entries = Vec::new();
        for (n, seg) in outcome.enhanced.iter().enumerate() {
            let name = format!("spk{}_seg{:03}.wav", seg.speaker, n);
            write_wav(&enhanced_dir.join(&name), &[seg.samples.clone()], fs as u32)?;
            entries.push(EnhancedEntry {
                file: format!("enhanced/{name}"),
                speaker: seg.speaker,
                start_s: seg.start_s,
                end_s: seg.end_s,
            });
        }
        std::fs::write(
            dir.join("enhanced_manifest.json"),
            serde_json::to_string_pretty(&entries)?,
        )?;
        files.push("enhanced_manifest.json".into());
    }

    let manifest = MeetingManifest {
        meeting: data.id.clone(),
        files,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Write a multichannel WAV (32-bit float).
pub fn write_wav(path: &Path, channels: &[Vec<f64>], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    let len = channels.iter().map(|c| c.len()).max().unwrap_or(0);
    for n in 0..len {
        for ch in channels {
            writer.write_sample(ch.get(n).copied().unwrap_or(0.0) as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

/// Read a multichannel WAV into f64 channels.
pub fn read_wav(path: &Path) -> Result<(Vec<Vec<f64>>, u32)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let mut out = vec![Vec::new(); channels];
    match spec.sample_format {
        hound::SampleFormat::Float => {
            for (i, s) in reader.samples::<f32>().enumerate() {
                out[i % channels].push(s? as f64);
            }
        }
        hound::SampleFormat::Int => {
            let denom = (1i64 << (spec.bits_per_sample - 1)) as f64;
            for (i, s) in reader.samples::<i32>().enumerate() {
                out[i % channels].push(s? as f64 / denom);
            }
        }
    }
    Ok((out, spec.sample_rate))
}

/// Export a simulated meeting set to disk: per-array WAVs, ground truth and
/// scenario echoes.
pub fn export_simulation(cfg: &PipelineConfig, out_dir: &Path) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("sim_config.json"),
        serde_json::to_string_pretty(cfg)?,
    )?;
    let results: Vec<Result<()>> = (0..cfg.simulate.num_meetings)
        .into_par_iter()
        .map(|index| {
            let data = simulate_meeting(index, cfg)?;
            let dir = out_dir.join(&data.id);
            let arrays_dir = dir.join("arrays");
            std::fs::create_dir_all(&arrays_dir)?;
            let mut files = vec!["scenario.json".to_string(), "ground_truth.json".into()];
            for array in &data.recordings.arrays {
                let name = format!("arrays/array_{}.wav", array.array_id);
                write_wav(
                    &dir.join(&name),
                    &array.channels,
                    data.recordings.sample_rate as u32,
                )?;
                files.push(name);
            }
            let refs_dir = dir.join("refs");
            std::fs::create_dir_all(&refs_dir)?;
            for (i, reference) in data.truth.speaker_refs.iter().enumerate() {
                let name = format!("refs/spk{i}.wav");
                write_wav(
                    &dir.join(&name),
                    &[reference.clone()],
                    data.recordings.sample_rate as u32,
                )?;
                files.push(name);
            }
            std::fs::write(
                dir.join("scenario.json"),
                serde_json::to_string_pretty(&data.scenario)?,
            )?;
            let truth = TruthFile {
                utterances: data.truth.utterances.clone(),
                clocks: data.truth.clocks.clone(),
                fractions: data.truth.fractions,
            };
            std::fs::write(
                dir.join("ground_truth.json"),
                serde_json::to_string_pretty(&truth)?,
            )?;
            files.push("reference.rttm".into());
            std::fs::write(
                dir.join("reference.rttm"),
                crate::diarize::segments_to_rttm(&reference_segments(&data.truth), &data.id)
                    + "\n",
            )?;
            std::fs::write(
                dir.join("manifest.json"),
                serde_json::to_string_pretty(&MeetingManifest {
                    meeting: data.id.clone(),
                    files,
                })?,
            )?;
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    Ok(())
}

/// Serializable part of the ground truth.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub utterances: Vec<crate::simulate::UtteranceInfo>,
    pub clocks: Vec<crate::simulate::TrueClock>,
    pub fractions: crate::simulate::ActivityFractions,
}

// ---------------------------------------------------------------------------
// Run comparison.

/// Aligned metric deltas between two or more runs.
pub struct Comparison {
    /// (meeting, metric, values per run, delta last-first).
    pub rows: Vec<(String, String, Vec<Option<f64>>, Option<f64>)>,
    pub run_names: Vec<String>,
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<14} {:<18}", "meeting", "metric");
        for name in &self.run_names {
            out.push_str(&format!(" {name:>14}"));
        }
        out.push_str(&format!(" {:>10}\n", "delta"));
        for (meeting, metric, values, delta) in &self.rows {
            out.push_str(&format!("{meeting:<14} {metric:<18}"));
            for v in values {
                match v {
                    Some(x) => out.push_str(&format!(" {x:>14.3}")),
                    None => out.push_str(&format!(" {:>14}", "-")),
                }
            }
            match delta {
                Some(d) => out.push_str(&format!(" {d:>+10.3}\n")),
                None => out.push_str(&format!(" {:>10}\n", "-")),
            }
        }
        out
    }
}

/// Compare the metric tables of completed runs; meetings must match.
pub fn compare(run_dirs: &[PathBuf]) -> Result<Comparison> {
    if run_dirs.len() < 2 {
        return Err(Error::Mismatch("need at least two runs to compare".into()));
    }
    let mut tables = Vec::new();
    for dir in run_dirs {
        tables.push(read_metrics_csv(&dir.join("metrics.csv"))?);
    }
    let meetings: Vec<String> = tables[0].iter().map(|r| r.0.clone()).collect();
    for (dir, table) in run_dirs.iter().zip(&tables).skip(1) {
        let other: Vec<String> = table.iter().map(|r| r.0.clone()).collect();
        if other != meetings {
            return Err(Error::Mismatch(format!(
                "meeting sets differ between {} and {}: {:?} vs {:?}",
                run_dirs[0].display(),
                dir.display(),
                meetings,
                other
            )));
        }
    }

    let run_names: Vec<String> = run_dirs
        .iter()
        .map(|d| {
            d.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| d.display().to_string())
        })
        .collect();
    let mut rows = Vec::new();
    for (m, meeting) in meetings.iter().enumerate() {
        for (metric, idx) in [("der_percent", 0usize), ("si_sdr_db", 1), ("sto_error_ms", 2)] {
            let values: Vec<Option<f64>> = tables.iter().map(|t| t[m].1[idx]).collect();
            let delta = match (values.first().copied().flatten(), values.last().copied().flatten())
            {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            };
            if values.iter().any(|v| v.is_some()) {
                rows.push((meeting.clone(), metric.to_string(), values, delta));
            }
        }
    }
    Ok(Comparison { rows, run_names })
}

type MetricsRow = (String, [Option<f64>; 3]);

fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let content = std::fs::read_to_string(path)?;
    let mut lines = content.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Mismatch(format!("{} is empty", path.display())))?
        .split(',')
        .collect();
    let col = |name: &str| header.iter().position(|&h| h == name);
    let (Some(meeting_col), Some(der_col), Some(sdr_col), Some(sto_col)) = (
        col("meeting"),
        col("der_percent"),
        col("si_sdr_db"),
        col("sto_error_ms"),
    ) else {
        return Err(Error::Mismatch(format!(
            "{} lacks expected columns",
            path.display()
        )));
    };
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |c: usize| -> Option<f64> { fields.get(c).and_then(|v| v.parse().ok()) };
        rows.push((
            fields[meeting_col].to_string(),
            [get(der_col), get(sdr_col), get(sto_col)],
        ));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(rows)
}
