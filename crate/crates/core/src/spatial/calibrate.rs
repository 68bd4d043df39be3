//! Geometry calibration by iterative data set matching.
//!
//! Per-array clouds of distance/DoA-derived local speaker positions are
//! clustered into candidate points, matched across arrays through shared
//! frames, and rigidly aligned (rotation plus translation, no scaling)
//! onto a common point set that is re-averaged until it stops moving.

use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;

use crate::cluster::{cluster_2d, group_by_id};
use crate::config::SpatialConfig;
use crate::error::{Error, Result};
use crate::simulate::Scenario;

use super::localize::LocalObservation;

/// Pose of one array in the reference gauge.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ArrayPlacement {
    pub position: [f64; 2],
    pub orientation: f64,
}

impl ArrayPlacement {
    pub fn identity() -> Self {
        Self {
            position: [0.0, 0.0],
            orientation: 0.0,
        }
    }

    /// Map a point from this array's local frame to the global frame.
    pub fn to_global(&self, local: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.orientation.sin_cos();
        [
            self.position[0] + c * local[0] - s * local[1],
            self.position[1] + s * local[0] + c * local[1],
        ]
    }
}

/// Calibrated array poses and speaker positions, gauge-fixed to array 0
/// (origin, orientation zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkGeometry {
    pub arrays: Vec<ArrayPlacement>,
    pub speakers: Vec<[f64; 2]>,
}

impl NetworkGeometry {
    /// Ground-truth geometry expressed in the array-0 gauge.
    pub fn oracle_from_scenario(scenario: &Scenario) -> Self {
        let p0 = scenario.arrays[0].position;
        let o0 = scenario.arrays[0].orientation;
        let (s, c) = (-o0).sin_cos();
        let map = |p: [f64; 2]| -> [f64; 2] {
            let d = [p[0] - p0[0], p[1] - p0[1]];
            [c * d[0] - s * d[1], s * d[0] + c * d[1]]
        };
        NetworkGeometry {
            arrays: scenario
                .arrays
                .iter()
                .map(|a| ArrayPlacement {
                    position: map(a.position),
                    orientation: (a.orientation - o0).rem_euclid(std::f64::consts::TAU),
                })
                .collect(),
            speakers: scenario.speakers.iter().map(|&p| map(p)).collect(),
        }
    }

    /// Global microphone positions of one array for a square layout.
    pub fn mic_positions(&self, array: usize, mics: usize, edge: f64) -> Vec<[f64; 2]> {
        crate::simulate::ArrayPose {
            position: self.arrays[array].position,
            orientation: self.arrays[array].orientation,
        }
        .mic_positions(mics, edge)
    }
}

/// Calibrate array poses and speaker positions from local observations.
///
/// Observations should come from frames with a single active speaker; the
/// caller is responsible for that gating.
pub fn calibrate_geometry(
    observations: &[LocalObservation],
    num_arrays: usize,
    cfg: &SpatialConfig,
) -> Result<NetworkGeometry> {
    // Per-array clustering of local positions into candidate points.
    let mut per_array_points: Vec<Vec<[f64; 2]>> = vec![Vec::new(); num_arrays];
    let mut per_array_frames: Vec<Vec<usize>> = vec![Vec::new(); num_arrays];
    for obs in observations {
        per_array_points[obs.array].push(obs.local_position());
        per_array_frames[obs.array].push(obs.frame);
    }

    struct Candidate {
        point: [f64; 2],
        frames: Vec<usize>,
    }
    let mut candidates: Vec<Vec<Candidate>> = Vec::with_capacity(num_arrays);
    for a in 0..num_arrays {
        let ids = cluster_points_fast(&per_array_points[a], cfg.speaker_cluster_threshold_m);
        let mut list = Vec::new();
        for members in group_by_id(&ids) {
            if members.len() < cfg.min_cluster_frames {
                continue;
            }
            let point = component_median(
                members.iter().map(|&i| per_array_points[a][i]).collect(),
            );
            let mut frames: Vec<usize> =
                members.iter().map(|&i| per_array_frames[a][i]).collect();
            frames.sort_unstable();
            list.push(Candidate { point, frames });
        }
        candidates.push(list);
    }

    let labels = candidates[0].len();
    if labels < 3 {
        return Err(Error::UnderDeterminedCalibration(labels));
    }

    // Correspondence: a candidate on array j belongs to the reference label
    // whose cluster shares the most frames with it. Spurious candidates
    // (e.g. strong wall reflections) share frames with a real speaker, so
    // each label keeps only its best-supported candidate.
    let mut matched: Vec<Vec<Option<[f64; 2]>>> = vec![vec![None; labels]; num_arrays];
    for (label, c) in candidates[0].iter().enumerate() {
        matched[0][label] = Some(c.point);
    }
    for a in 1..num_arrays {
        let mut best_overlap = vec![0usize; labels];
        for cand in &candidates[a] {
            let (best_label, overlap) = candidates[0]
                .iter()
                .enumerate()
                .map(|(l, r)| (l, shared_count(&cand.frames, &r.frames)))
                .max_by_key(|&(_, n)| n)
                .unwrap();
            if overlap >= cfg.min_cluster_frames / 2 && overlap > best_overlap[best_label] {
                best_overlap[best_label] = overlap;
                matched[a][best_label] = Some(cand.point);
            }
        }
    }

    // Iterative matching: rigidly align each array onto the global points,
    // then re-average the global points.
    let mut global: Vec<[f64; 2]> = candidates[0].iter().map(|c| c.point).collect();
    let mut placements = vec![ArrayPlacement::identity(); num_arrays];
    for _ in 0..cfg.calibration_max_iters {
        for a in 1..num_arrays {
            let pairs: Vec<([f64; 2], [f64; 2])> = (0..labels)
                .filter_map(|l| matched[a][l].map(|p| (p, global[l])))
                .collect();
            if pairs.len() >= 2 {
                placements[a] = fit_rigid(&pairs);
            }
        }
        let mut movement = 0.0f64;
        for (l, g) in global.iter_mut().enumerate() {
            let mut sum = [0.0, 0.0];
            let mut n = 0.0;
            for a in 0..num_arrays {
                if let Some(p) = matched[a][l] {
                    let mapped = placements[a].to_global(p);
                    sum[0] += mapped[0];
                    sum[1] += mapped[1];
                    n += 1.0;
                }
            }
            if n > 0.0 {
                let new = [sum[0] / n, sum[1] / n];
                movement = movement
                    .max(((new[0] - g[0]).powi(2) + (new[1] - g[1]).powi(2)).sqrt());
                *g = new;
            }
        }
        if movement < cfg.calibration_tolerance_m {
            break;
        }
    }

    if is_collinear(&global) {
        return Err(Error::DegenerateConfiguration);
    }
    // Canonical speaker order: clustering is greedy, so the discovery order
    // depends on the observation order; sorting makes the output stable.
    global.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    Ok(NetworkGeometry {
        arrays: placements,
        speakers: global,
    })
}

/// Least-squares rigid transform (rotation + translation) mapping the local
/// points onto the global ones.
fn fit_rigid(pairs: &[([f64; 2], [f64; 2])]) -> ArrayPlacement {
    let n = pairs.len() as f64;
    let mut ca = [0.0, 0.0];
    let mut cb = [0.0, 0.0];
    for (a, b) in pairs {
        ca[0] += a[0] / n;
        ca[1] += a[1] / n;
        cb[0] += b[0] / n;
        cb[1] += b[1] / n;
    }
    let mut cross = 0.0;
    let mut dot = 0.0;
    for (a, b) in pairs {
        let ax = a[0] - ca[0];
        let ay = a[1] - ca[1];
        let bx = b[0] - cb[0];
        let by = b[1] - cb[1];
        cross += ax * by - ay * bx;
        dot += ax * bx + ay * by;
    }
    let theta = cross.atan2(dot);
    let (s, c) = theta.sin_cos();
    ArrayPlacement {
        position: [
            cb[0] - (c * ca[0] - s * ca[1]),
            cb[1] - (s * ca[0] + c * ca[1]),
        ],
        orientation: theta.rem_euclid(std::f64::consts::TAU),
    }
}

/// Cluster thousands of near-duplicate positions by first aggregating them
/// on a fine grid; only the occupied cells go through the quadratic
/// agglomerative pass.
fn cluster_points_fast(points: &[[f64; 2]], threshold: f64) -> Vec<usize> {
    let cell = threshold / 4.0;
    let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        let key = ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
        cells.entry(key).or_default().push(i);
    }
    let centroids: Vec<[f64; 2]> = cells
        .values()
        .map(|members| {
            let n = members.len() as f64;
            [
                members.iter().map(|&i| points[i][0]).sum::<f64>() / n,
                members.iter().map(|&i| points[i][1]).sum::<f64>() / n,
            ]
        })
        .collect();
    let cell_ids = cluster_2d(&centroids, threshold);
    let mut ids = vec![0usize; points.len()];
    for (cell_idx, members) in cells.values().enumerate() {
        for &i in members {
            ids[i] = cell_ids[cell_idx];
        }
    }
    ids
}

fn component_median(mut points: Vec<[f64; 2]>) -> [f64; 2] {
    let mid = points.len() / 2;
    let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    xs.sort_by(f64::total_cmp);
    points.sort_by(|a, b| a[1].total_cmp(&b[1]));
    [xs[mid], points[mid][1]]
}

fn shared_count(a: &[usize], b: &[usize]) -> usize {
    let mut count = 0;
    let mut i = 0;
    let mut j = 0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// All points within 5 cm of one line make the orientation unobservable.
fn is_collinear(points: &[[f64; 2]]) -> bool {
    if points.len() < 3 {
        return true;
    }
    let mut best = f64::MAX;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = ((points[i][0] - points[j][0]).powi(2)
                + (points[i][1] - points[j][1]).powi(2))
            .sqrt();
            if d < 1e-9 {
                continue;
            }
            let mut worst = 0.0f64;
            for (k, p) in points.iter().enumerate() {
                if k == i || k == j {
                    continue;
                }
                let area2 = ((points[j][0] - points[i][0]) * (p[1] - points[i][1])
                    - (points[j][1] - points[i][1]) * (p[0] - points[i][0]))
                    .abs();
                worst = worst.max(area2 / d);
            }
            best = best.min(worst);
        }
    }
    best < 0.05
}
