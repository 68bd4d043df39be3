//! Constraint-based sampling of conference-room scenarios.
//!
//! Speakers sit around a rectangular table, compact square microphone
//! arrays lie on it, and every placement constraint is checked by rejection
//! sampling. Each non-reference array carries a sampling time offset and a
//! time-varying sampling rate offset trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::SimulateConfig;
use crate::error::{Error, Result};

/// Frame shift (samples) of the ground-truth SRO traces.
pub const SRO_TRACE_SHIFT: usize = 256;

/// Position and orientation of one array in the global frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayPose {
    /// Array center (m).
    pub position: [f64; 2],
    /// Orientation (rad).
    pub orientation: f64,
}

impl ArrayPose {
    /// Global microphone positions for a square array with `edge` length.
    /// Microphones sit on the square's corners; channel 0 is the reference.
    pub fn mic_positions(&self, mics: usize, edge: f64) -> Vec<[f64; 2]> {
        let half = edge / 2.0;
        let corners = [
            [half, half],
            [-half, half],
            [-half, -half],
            [half, -half],
        ];
        let (sin, cos) = self.orientation.sin_cos();
        (0..mics)
            .map(|m| {
                let q = corners[m % 4];
                [
                    self.position[0] + cos * q[0] - sin * q[1],
                    self.position[1] + sin * q[0] + cos * q[1],
                ]
            })
            .collect()
    }
}

/// One fully specified recording scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    /// Room floor dimensions (m).
    pub room: [f64; 2],
    pub room_height_m: f64,
    pub t60_s: f64,
    /// Table dimensions (m), axis-aligned in the table frame.
    pub table: [f64; 2],
    pub table_center: [f64; 2],
    pub table_rotation: f64,
    /// Speaker positions in the global frame (m).
    pub speakers: Vec<[f64; 2]>,
    /// Array poses in the global frame; index 0 is the sync reference.
    pub arrays: Vec<ArrayPose>,
    pub snr_db: f64,
    /// Recording start offset per array (s); the reference is 0.
    pub sto_s: Vec<f64>,
    /// Per-array SRO traces (ppm per frame of [`SRO_TRACE_SHIFT`] samples);
    /// the reference trace is all zeros.
    pub sro_ppm: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub plane_height_m: f64,
    pub mics_per_array: usize,
    pub array_edge_m: f64,
}

impl Scenario {
    /// Global microphone positions of one array.
    pub fn mic_positions(&self, array: usize) -> Vec<[f64; 2]> {
        self.arrays[array].mic_positions(self.mics_per_array, self.array_edge_m)
    }

    /// 3-D microphone positions (plane height applied).
    pub fn mic_positions_3d(&self, array: usize) -> Vec<[f64; 3]> {
        self.mic_positions(array)
            .into_iter()
            .map(|p| [p[0], p[1], self.plane_height_m])
            .collect()
    }

    /// 3-D speaker position.
    pub fn speaker_position_3d(&self, speaker: usize) -> [f64; 3] {
        let p = self.speakers[speaker];
        [p[0], p[1], self.plane_height_m]
    }

    /// Geometric time difference of flight between two microphones for a
    /// source position, in seconds (positive if `mic_b` is farther).
    pub fn tdof_s(&self, source: [f64; 2], mic_a: [f64; 2], mic_b: [f64; 2]) -> f64 {
        let da = ((source[0] - mic_a[0]).powi(2) + (source[1] - mic_a[1]).powi(2)).sqrt();
        let db = ((source[0] - mic_b[0]).powi(2) + (source[1] - mic_b[1]).powi(2)).sqrt();
        (db - da) / crate::SPEED_OF_SOUND
    }
}

fn rotate(p: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Sample a scenario satisfying all placement constraints.
pub fn sample_scenario(seed: u64, cfg: &SimulateConfig) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // The speaker count is drawn once so rejection cannot bias it toward
    // easier-to-place small groups.
    let num_speakers = rng.random_range(cfg.speakers_min..=cfg.speakers_max);
    let max_attempts = 10_000;
    for _ in 0..max_attempts {
        if let Some(s) = try_sample(seed, cfg, num_speakers, &mut rng) {
            debug_assert!(validate_scenario(&s, cfg).is_empty());
            return Ok(s);
        }
    }
    Err(Error::ConstraintsUnsatisfiable {
        attempts: max_attempts,
        seed,
    })
}

fn try_sample(
    seed: u64,
    cfg: &SimulateConfig,
    num_speakers: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Scenario> {
    let table = [
        rng.random_range(cfg.table_min_m..cfg.table_max_m),
        rng.random_range(cfg.table_min_m..cfg.table_max_m),
    ];

    // Speakers around the table edge (table frame, origin at the center).
    let mut speakers_local: Vec<[f64; 2]> = Vec::with_capacity(num_speakers);
    'speaker: for _ in 0..num_speakers {
        for _ in 0..200 {
            let p = sample_around_table(table, 0.4, rng);
            let ok = speakers_local
                .iter()
                .all(|q| dist(p, *q) >= 0.5);
            if ok {
                speakers_local.push(p);
                continue 'speaker;
            }
        }
        return None;
    }

    // Arrays on the table, 0.2 m from edges and each other, not collinear.
    let margin = 0.2;
    if table[0] / 2.0 <= margin || table[1] / 2.0 <= margin {
        return None;
    }
    let mut arrays_local: Vec<[f64; 2]> = Vec::with_capacity(cfg.num_arrays);
    'array: for _ in 0..cfg.num_arrays {
        for _ in 0..200 {
            let p = [
                rng.random_range(-(table[0] / 2.0 - margin)..(table[0] / 2.0 - margin)),
                rng.random_range(-(table[1] / 2.0 - margin)..(table[1] / 2.0 - margin)),
            ];
            if arrays_local.iter().all(|q| dist(p, *q) >= margin) {
                arrays_local.push(p);
                continue 'array;
            }
        }
        return None;
    }
    if arrays_local.len() >= 3 && collinear(&arrays_local) {
        return None;
    }
    let orientations: Vec<f64> = (0..cfg.num_arrays)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();

    // Rotate the table and place it in the room with 1 m wall clearance for
    // everything, speakers included.
    let room = [
        rng.random_range(cfg.room_min_m..cfg.room_max_m),
        rng.random_range(cfg.room_min_m..cfg.room_max_m),
    ];
    let rotation = rng.random_range(0.0..std::f64::consts::TAU);
    let mut extent = 0.0f64;
    for p in speakers_local.iter().chain(arrays_local.iter()) {
        extent = extent.max((p[0] * p[0] + p[1] * p[1]).sqrt());
    }
    extent += 0.1;
    let wall = 1.0;
    if room[0] - 2.0 * (wall + extent) <= 0.0 || room[1] - 2.0 * (wall + extent) <= 0.0 {
        return None;
    }
    let center = [
        rng.random_range((wall + extent)..(room[0] - wall - extent)),
        rng.random_range((wall + extent)..(room[1] - wall - extent)),
    ];

    let to_global = |p: [f64; 2]| -> [f64; 2] {
        let r = rotate(p, rotation);
        [r[0] + center[0], r[1] + center[1]]
    };
    let speakers: Vec<[f64; 2]> = speakers_local.iter().map(|&p| to_global(p)).collect();
    let arrays: Vec<ArrayPose> = arrays_local
        .iter()
        .zip(&orientations)
        .map(|(&p, &o)| ArrayPose {
            position: to_global(p),
            orientation: (o + rotation).rem_euclid(std::f64::consts::TAU),
        })
        .collect();

    let t60 = rng.random_range(cfg.t60_min_s..cfg.t60_max_s);
    let snr_db = rng.random_range(cfg.snr_min_db..cfg.snr_max_db);

    // Clock parameters; array 0 is the reference with a perfect clock.
    let frames = (cfg.duration_s * cfg.sample_rate as f64 / SRO_TRACE_SHIFT as f64).ceil()
        as usize
        + 64;
    let dt = SRO_TRACE_SHIFT as f64 / cfg.sample_rate as f64;
    let walk_step = Normal::new(0.0, cfg.sro_walk_ppm_per_s * dt.sqrt()).ok()?;
    let mut sto_s = vec![0.0];
    let mut sro_ppm = vec![vec![0.0; frames]];
    for _ in 1..cfg.num_arrays {
        sto_s.push(rng.random_range(cfg.sto_min_s..cfg.sto_max_s));
        let mean = rng.random_range(cfg.sro_min_ppm..cfg.sro_max_ppm);
        let mut walk = 0.0f64;
        let trace: Vec<f64> = (0..frames)
            .map(|_| {
                walk = (walk + walk_step.sample(rng))
                    .clamp(-cfg.sro_walk_clip_ppm, cfg.sro_walk_clip_ppm);
                mean + walk
            })
            .collect();
        sro_ppm.push(trace);
    }

    Some(Scenario {
        seed,
        room,
        room_height_m: cfg.room_height_m,
        t60_s: t60,
        table,
        table_center: center,
        table_rotation: rotation,
        speakers,
        arrays,
        snr_db,
        sto_s,
        sro_ppm,
        sample_rate: cfg.sample_rate,
        duration_s: cfg.duration_s,
        plane_height_m: cfg.plane_height_m,
        mics_per_array: cfg.mics_per_array,
        array_edge_m: cfg.array_edge_m,
    })
}

/// Uniform point between the table edge and `reach` meters outside it.
fn sample_around_table(table: [f64; 2], reach: f64, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let (hx, hy) = (table[0] / 2.0, table[1] / 2.0);
    let perimeter = 2.0 * (table[0] + table[1]);
    let mut u = rng.random_range(0.0..perimeter);
    let d = rng.random_range(0.0..reach);
    if u < table[0] {
        return [-hx + u, -hy - d];
    }
    u -= table[0];
    if u < table[1] {
        return [hx + d, -hy + u];
    }
    u -= table[1];
    if u < table[0] {
        return [hx - u, hy + d];
    }
    u -= table[0];
    [-hx - d, hy - u]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Distance of the farthest point to the line through the two most distant
/// points; small values mean an end-fire constellation.
fn collinear(points: &[[f64; 2]]) -> bool {
    let mut worst = f64::MAX;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            for k in 0..points.len() {
                if k == i || k == j {
                    continue;
                }
                let d = dist(points[i], points[j]);
                if d < 1e-9 {
                    return true;
                }
                let area2 = ((points[j][0] - points[i][0]) * (points[k][1] - points[i][1])
                    - (points[j][1] - points[i][1]) * (points[k][0] - points[i][0]))
                    .abs();
                worst = worst.min(area2 / d);
            }
        }
    }
    worst < 0.05
}

/// Check every placement constraint; returns human-readable violations.
pub fn validate_scenario(s: &Scenario, cfg: &SimulateConfig) -> Vec<String> {
    let mut violations = Vec::new();
    let mut check = |ok: bool, msg: String| {
        if !ok {
            violations.push(msg);
        }
    };

    check(
        s.speakers.len() >= cfg.speakers_min && s.speakers.len() <= cfg.speakers_max,
        format!("speaker count {} out of range", s.speakers.len()),
    );
    for (i, a) in s.speakers.iter().enumerate() {
        for (j, b) in s.speakers.iter().enumerate().skip(i + 1) {
            check(
                dist(*a, *b) >= 0.5 - 1e-9,
                format!("speakers {i} and {j} closer than 0.5 m"),
            );
        }
    }

    // Everything at least 1 m from the walls.
    for p in s.speakers.iter().chain(s.arrays.iter().map(|a| &a.position)) {
        check(
            p[0] >= 1.0 && p[1] >= 1.0 && p[0] <= s.room[0] - 1.0 && p[1] <= s.room[1] - 1.0,
            format!("point ({:.2}, {:.2}) within 1 m of a wall", p[0], p[1]),
        );
    }

    // Speakers within 0.4 m of the table edge (table frame).
    let inv = |p: [f64; 2]| -> [f64; 2] {
        rotate(
            [p[0] - s.table_center[0], p[1] - s.table_center[1]],
            -s.table_rotation,
        )
    };
    for (i, sp) in s.speakers.iter().enumerate() {
        let l = inv(*sp);
        let dx = (l[0].abs() - s.table[0] / 2.0).max(0.0);
        let dy = (l[1].abs() - s.table[1] / 2.0).max(0.0);
        let outside = (dx * dx + dy * dy).sqrt();
        let inside = l[0].abs() <= s.table[0] / 2.0 && l[1].abs() <= s.table[1] / 2.0;
        check(
            !inside && outside <= 0.4 + 1e-9,
            format!("speaker {i} not within 0.4 m outside the table edge"),
        );
    }

    // Arrays on the table with 0.2 m margins, pairwise spacing, not collinear.
    let mut array_local = Vec::new();
    for (j, a) in s.arrays.iter().enumerate() {
        let l = inv(a.position);
        array_local.push(l);
        check(
            l[0].abs() <= s.table[0] / 2.0 - 0.2 + 1e-9
                && l[1].abs() <= s.table[1] / 2.0 - 0.2 + 1e-9,
            format!("array {j} within 0.2 m of the table edge"),
        );
    }
    for i in 0..s.arrays.len() {
        for j in (i + 1)..s.arrays.len() {
            check(
                dist(s.arrays[i].position, s.arrays[j].position) >= 0.2 - 1e-9,
                format!("arrays {i} and {j} closer than 0.2 m"),
            );
        }
    }
    if s.arrays.len() >= 3 {
        check(!collinear(&array_local), "arrays are collinear".into());
    }

    check(
        s.sto_s[0] == 0.0 && s.sro_ppm[0].iter().all(|&v| v == 0.0),
        "reference array clock is not ideal".into(),
    );
    for j in 1..s.sto_s.len() {
        check(
            s.sto_s[j] >= cfg.sto_min_s && s.sto_s[j] <= cfg.sto_max_s,
            format!("STO of array {j} out of range"),
        );
        let max_sro = cfg.sro_max_ppm.abs().max(cfg.sro_min_ppm.abs()) + cfg.sro_walk_clip_ppm;
        check(
            s.sro_ppm[j].iter().all(|v| v.abs() <= max_sro + 1e-9),
            format!("SRO trace of array {j} out of range"),
        );
    }

    check(
        s.t60_s >= cfg.t60_min_s && s.t60_s <= cfg.t60_max_s,
        "T60 out of range".into(),
    );
    check(
        s.snr_db >= cfg.snr_min_db && s.snr_db <= cfg.snr_max_db,
        "SNR out of range".into(),
    );
    violations
}
