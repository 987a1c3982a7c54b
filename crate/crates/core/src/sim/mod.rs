//! Synthetic dry-lab block-transfer (debridement) scenario.
//!
//! The generator scripts the seven subtasks as minimum-jerk moves between
//! waypoints. The carry move bows sideways around the obstacle box, so the
//! block's distance from its start position peaks near the middle of
//! subtask 4.

mod physics;
mod render;

pub use physics::{
    block_trace, frame_timestamps, simulate_block, step_block_physics, BlockFrame, BlockState, BlockTrace, FailureKind,
    FailureRecord,
};
pub use render::{
    render_frame, render_frames, CameraGeometry, RenderFlags, BACKGROUND, BLOCK, END_EFFECTOR, RECEPTACLE,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{transitions_of, SubtaskId, Trajectory, TrajectorySample, NANOS_PER_SEC};

/// Axis-aligned box in workspace millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSigma {
    pub position_mm: f64,
    pub grasper_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub home_position: [f64; 3],
    pub block_position: [f64; 3],
    pub receptacle_position: [f64; 3],
    pub end_position: [f64; 3],
    pub obstacle_box: Aabb,
    pub lift_height_mm: f64,
    /// Sideways bow of the carry path, perpendicular to block->receptacle.
    pub carry_detour_mm: f64,
    pub grasper_open: f64,
    pub grasper_closed: f64,
    pub grasp_close_threshold: f64,
    pub release_threshold: f64,
    pub capture_radius_mm: f64,
    pub subtask_durations_s: [f64; 7],
    /// Each duration is scaled by a factor drawn from [1 - j, 1 + j].
    pub duration_jitter: f64,
    pub noise_sigma: NoiseSigma,
    pub rate_hz: f64,
    pub frame_rate_fps: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            home_position: [-50.0, -40.0, 50.0],
            block_position: [-20.0, 0.0, 0.0],
            receptacle_position: [20.0, 0.0, 0.0],
            end_position: [50.0, -40.0, 50.0],
            obstacle_box: Aabb { min: [-8.0, -40.0, 0.0], max: [8.0, 30.0, 80.0] },
            lift_height_mm: 30.0,
            carry_detour_mm: 80.0,
            grasper_open: 1.0,
            grasper_closed: 0.2,
            grasp_close_threshold: 0.35,
            release_threshold: 0.8,
            capture_radius_mm: 10.0,
            subtask_durations_s: [1.0, 2.0, 1.5, 1.0, 2.5, 2.0, 1.5],
            duration_jitter: 0.1,
            noise_sigma: NoiseSigma { position_mm: 0.2, grasper_rad: 0.005 },
            rate_hz: 1000.0,
            frame_rate_fps: 30.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (i, d) in self.subtask_durations_s.iter().enumerate() {
            if !(d.is_finite() && *d > 0.0) {
                return bad(format!("subtask_durations_s[{i}] must be positive, got {d}"));
            }
        }
        let pi = std::f64::consts::PI;
        for (name, v) in
            [("grasp_close_threshold", self.grasp_close_threshold), ("release_threshold", self.release_threshold)]
        {
            if !(v > 0.0 && v < pi) {
                return bad(format!("{name} must lie in (0, pi), got {v}"));
            }
        }
        for (name, v) in [("grasper_open", self.grasper_open), ("grasper_closed", self.grasper_closed)] {
            if !(0.0..=pi).contains(&v) {
                return bad(format!("{name} must lie in [0, pi], got {v}"));
            }
        }
        if !(self.duration_jitter >= 0.0 && self.duration_jitter < 1.0) {
            return bad(format!("duration_jitter must lie in [0, 1), got {}", self.duration_jitter));
        }
        if !(self.noise_sigma.position_mm >= 0.0 && self.noise_sigma.grasper_rad >= 0.0) {
            return bad("noise_sigma must be non-negative".into());
        }
        if !(self.rate_hz > 0.0 && self.frame_rate_fps > 0.0 && self.capture_radius_mm > 0.0) {
            return bad("rate_hz, frame_rate_fps and capture_radius_mm must be positive".into());
        }
        if self.obstacle_box.contains(self.block_position) {
            return bad("block_position lies inside obstacle_box".into());
        }
        Ok(())
    }

    pub fn table_z(&self) -> f64 {
        self.block_position[2]
    }

    pub fn frame_period_ns(&self) -> i64 {
        (NANOS_PER_SEC as f64 / self.frame_rate_fps).round() as i64
    }
}

/// Per-sample subtask labels of a generated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLabels {
    pub labels: Vec<SubtaskId>,
    pub transition_indices: Vec<usize>,
}

impl GroundTruthLabels {
    pub fn from_labels(labels: Vec<SubtaskId>) -> Self {
        let transition_indices = transitions_of(&labels);
        Self { labels, transition_indices }
    }

    /// Sample range `[start, end)` covered by `subtask`, if present.
    pub fn span(&self, subtask: SubtaskId) -> Option<(usize, usize)> {
        let start = self.labels.iter().position(|&l| l == subtask)?;
        let end = self.labels.iter().rposition(|&l| l == subtask)? + 1;
        Some((start, end))
    }
}

/// Normalized minimum-jerk profile on [0, 1].
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

fn lerp3(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * s, a[1] + (b[1] - a[1]) * s, a[2] + (b[2] - a[2]) * s]
}

fn lifted(p: [f64; 3], h: f64) -> [f64; 3] {
    [p[0], p[1], p[2] + h]
}

/// Noise-free pose for `subtask` at normalized progress `tau`.
fn scripted_pose(cfg: &ScenarioConfig, subtask: SubtaskId, tau: f64) -> ([f64; 3], f64) {
    let (open, closed) = (cfg.grasper_open, cfg.grasper_closed);
    let block = cfg.block_position;
    let recept = cfg.receptacle_position;
    let lift = cfg.lift_height_mm;
    match subtask.index() {
        0 => (cfg.home_position, open),
        1 => (lerp3(cfg.home_position, block, min_jerk(tau)), open),
        2 => (block, open + (closed - open) * min_jerk(tau / 0.7)),
        3 => (lerp3(block, lifted(block, lift), min_jerk(tau)), closed),
        4 => {
            let s = min_jerk(tau);
            let mut p = lerp3(lifted(block, lift), lifted(recept, lift), s);
            let (dx, dy) = (recept[0] - block[0], recept[1] - block[1]);
            let norm = dx.hypot(dy).max(f64::EPSILON);
            let bow = 4.0 * s * (1.0 - s) * cfg.carry_detour_mm;
            p[0] += -dy / norm * bow;
            p[1] += dx / norm * bow;
            (p, closed)
        }
        5 => {
            if tau < 0.5 {
                (lerp3(lifted(recept, lift), recept, min_jerk(tau / 0.5)), closed)
            } else {
                (recept, closed + (open - closed) * min_jerk((tau - 0.5) / 0.5))
            }
        }
        _ => (lerp3(recept, cfg.end_position, min_jerk(tau)), open),
    }
}

/// Scripted fault-free run: deterministic in `cfg.seed`.
pub fn generate_trajectory(cfg: &ScenarioConfig) -> Result<(Trajectory, GroundTruthLabels)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let counts: Vec<usize> = cfg
        .subtask_durations_s
        .iter()
        .map(|d| {
            let factor = if cfg.duration_jitter > 0.0 {
                rng.random_range(1.0 - cfg.duration_jitter..=1.0 + cfg.duration_jitter)
            } else {
                1.0
            };
            ((d * factor * cfg.rate_hz).round() as usize).max(1)
        })
        .collect();
    let pos_noise = Normal::new(0.0, cfg.noise_sigma.position_mm).map_err(|e| Error::Config(e.to_string()))?;
    let grasp_noise = Normal::new(0.0, cfg.noise_sigma.grasper_rad).map_err(|e| Error::Config(e.to_string()))?;

    let total: usize = counts.iter().sum();
    let mut samples = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (subtask, &n) in SubtaskId::ALL.iter().zip(&counts) {
        for k in 0..n {
            let tau = if n > 1 { k as f64 / (n - 1) as f64 } else { 1.0 };
            let (p, g) = scripted_pose(cfg, *subtask, tau);
            let i = samples.len();
            let t_ns = (i as f64 * NANOS_PER_SEC as f64 / cfg.rate_hz).round() as i64;
            let x = p[0] + pos_noise.sample(&mut rng);
            let y = p[1] + pos_noise.sample(&mut rng);
            let z = p[2] + pos_noise.sample(&mut rng);
            let g = (g + grasp_noise.sample(&mut rng)).clamp(0.0, std::f64::consts::PI);
            samples.push(TrajectorySample::new(t_ns, x, y, z, g));
            labels.push(*subtask);
        }
    }
    let traj = Trajectory::new(samples, cfg.rate_hz)?;
    Ok((traj, GroundTruthLabels::from_labels(labels)))
}
