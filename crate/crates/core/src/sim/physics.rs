//! Block-transfer physics: pickup, release, dropoff and obstacle contact.
//!
//! Rules are instantaneous. The first failure is latched and never replaced.

use serde::{Deserialize, Serialize};

use super::ScenarioConfig;
use crate::error::{Error, Result};
use crate::trajectory::{frame_to_sample_indices, SubtaskId, Trajectory, TrajectorySample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureKind {
    UnintentionalRelease,
    FailureToDropoff,
    ObstacleCollision,
}

impl FailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::UnintentionalRelease => "UnintentionalRelease",
            FailureKind::FailureToDropoff => "FailureToDropoff",
            FailureKind::ObstacleCollision => "ObstacleCollision",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub kind: FailureKind,
    pub sample: usize,
    /// Filled in once the run is mapped onto video frames.
    pub frame: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockState {
    pub position: [f64; 3],
    pub held: bool,
    /// Successfully released inside the receptacle.
    pub delivered: bool,
    /// Sample index of the first release, successful or not.
    pub released_at: Option<usize>,
    pub failure: Option<FailureRecord>,
    last_label: Option<SubtaskId>,
    next_index: usize,
}

impl BlockState {
    pub fn initial(cfg: &ScenarioConfig) -> Self {
        Self {
            position: cfg.block_position,
            held: false,
            delivered: false,
            released_at: None,
            failure: None,
            last_label: None,
            next_index: 0,
        }
    }

    /// Number of samples processed so far.
    pub fn samples_seen(&self) -> usize {
        self.next_index
    }

    fn fail(&mut self, kind: FailureKind, sample: usize) {
        if self.failure.is_none() {
            self.failure = Some(FailureRecord { kind, sample, frame: None });
        }
    }

    fn release(&mut self, at: usize, table_z: f64) {
        self.held = false;
        self.position[2] = table_z;
        self.released_at.get_or_insert(at);
    }

    /// Closes an unfinished dropping phase at the end of a run.
    pub fn finish(&self) -> Self {
        let mut next = *self;
        if self.last_label == Some(SubtaskId::DROP) && !self.delivered {
            next.fail(FailureKind::FailureToDropoff, self.next_index.saturating_sub(1));
        }
        next
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Advances the block by one kinematics sample.
pub fn step_block_physics(
    state: &BlockState,
    s: &TrajectorySample,
    label: SubtaskId,
    cfg: &ScenarioConfig,
) -> BlockState {
    let mut next = *state;
    let i = state.next_index;
    next.next_index += 1;
    next.last_label = Some(label);
    let ee = s.position();

    if state.last_label == Some(SubtaskId::DROP) && label != SubtaskId::DROP && !state.delivered {
        next.fail(FailureKind::FailureToDropoff, i.saturating_sub(1));
    }
    if cfg.obstacle_box.contains(ee) {
        next.fail(FailureKind::ObstacleCollision, i);
    }

    if next.held {
        next.position = ee;
        if s.grasper > cfg.release_threshold {
            let at_receptacle = dist(ee, cfg.receptacle_position) <= cfg.capture_radius_mm;
            next.release(i, cfg.table_z());
            if label == SubtaskId::MOVE_UP || label == SubtaskId::MOVE_TO_RECEPTACLE {
                next.fail(FailureKind::UnintentionalRelease, i);
            } else if label == SubtaskId::DROP && at_receptacle {
                next.delivered = true;
            }
        }
    } else if !next.delivered
        && s.grasper <= cfg.grasp_close_threshold
        && dist(ee, next.position) <= cfg.capture_radius_mm
    {
        next.held = true;
        next.position = ee;
    }
    next
}

/// Per-sample block states for a whole run (state after each sample), with
/// the end-of-run dropoff check applied to the last state.
pub fn simulate_block(traj: &Trajectory, labels: &[SubtaskId], cfg: &ScenarioConfig) -> Result<Vec<BlockState>> {
    if labels.len() != traj.len() {
        return Err(Error::Input(format!("{} labels for {} samples", labels.len(), traj.len())));
    }
    let mut state = BlockState::initial(cfg);
    let mut states = Vec::with_capacity(traj.len());
    for (s, &label) in traj.samples().iter().zip(labels) {
        state = step_block_physics(&state, s, label, cfg);
        states.push(state);
    }
    if let Some(last) = states.last_mut() {
        *last = last.finish();
    }
    Ok(states)
}

/// Block state as seen in one video frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockFrame {
    pub frame: usize,
    pub t_ns: i64,
    pub sample: usize,
    pub position: [f64; 3],
    pub end_effector: [f64; 3],
    pub held: bool,
    pub dropped_at: Option<usize>,
    pub failure: Option<FailureRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrace {
    pub frames: Vec<BlockFrame>,
    pub failure: Option<FailureRecord>,
}

impl BlockTrace {
    pub fn frame_to_sample(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.sample).collect()
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for f in &self.frames {
            serde_json::to_writer(&mut out, f)?;
            out.push(b'\n');
        }
        Ok(out)
    }
}

/// Frame timestamps every frame period from the first sample to the last.
pub fn frame_timestamps(traj: &Trajectory, fps: f64) -> Vec<i64> {
    let first = traj.samples()[0].t_ns;
    let last = traj.samples()[traj.len() - 1].t_ns;
    let mut ts = Vec::new();
    let mut k = 0u64;
    loop {
        let t = first + (k as f64 * 1e9 / fps).round() as i64;
        if t > last {
            break;
        }
        ts.push(t);
        k += 1;
    }
    ts
}

/// Runs the physics and samples it at the video frame rate.
pub fn block_trace(traj: &Trajectory, labels: &[SubtaskId], cfg: &ScenarioConfig) -> Result<BlockTrace> {
    let states = simulate_block(traj, labels, cfg)?;
    let frame_ts = frame_timestamps(traj, cfg.frame_rate_fps);
    let sample_ts: Vec<i64> = traj.timestamps().collect();
    let mapping = frame_to_sample_indices(&sample_ts, &frame_ts, cfg.frame_period_ns())?;
    let first_frame_at = |sample: usize| mapping.iter().position(|&m| m >= sample).unwrap_or(mapping.len() - 1);

    let failure =
        states.last().and_then(|s| s.failure).map(|f| FailureRecord { frame: Some(first_frame_at(f.sample)), ..f });
    let dropped_frame = states.last().and_then(|s| s.released_at).map(first_frame_at);

    let frames = mapping
        .iter()
        .enumerate()
        .map(|(frame, &sample)| {
            let st = &states[sample];
            BlockFrame {
                frame,
                t_ns: frame_ts[frame],
                sample,
                position: st.position,
                end_effector: traj.samples()[sample].position(),
                held: st.held,
                dropped_at: dropped_frame.filter(|&d| d <= frame),
                failure: failure.filter(|f| f.frame.is_some_and(|ff| ff <= frame)),
            }
        })
        .collect();
    Ok(BlockTrace { frames, failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_trajectory, NoiseSigma};

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    fn held_state(cfg: &ScenarioConfig, at: [f64; 3]) -> BlockState {
        BlockState { position: at, held: true, ..BlockState::initial(cfg) }
    }

    #[test]
    fn release_during_carry() {
        let c = cfg();
        let st = held_state(&c, [0.0, 60.0, 30.0]);
        let s = TrajectorySample::new(0, 0.0, 60.0, 30.0, 0.9);
        let next = step_block_physics(&st, &s, SubtaskId::MOVE_TO_RECEPTACLE, &c);
        assert!(!next.held);
        assert_eq!(next.failure.unwrap().kind, FailureKind::UnintentionalRelease);
        assert_eq!(next.position, [0.0, 60.0, c.table_z()]);
    }

    #[test]
    fn drop_phase_never_opening_fails() {
        let c = cfg();
        let mut st = held_state(&c, c.receptacle_position);
        for k in 0..10 {
            let g = 0.2 + 0.03 * k as f64;
            let s = TrajectorySample::new(k, 20.0, 0.0, 0.0, g);
            st = step_block_physics(&st, &s, SubtaskId::DROP, &c);
        }
        assert!(st.failure.is_none());
        let s = TrajectorySample::new(10, 30.0, -10.0, 10.0, 1.0);
        st = step_block_physics(&st, &s, SubtaskId::END, &c);
        let f = st.failure.unwrap();
        assert_eq!(f.kind, FailureKind::FailureToDropoff);
        assert_eq!(f.sample, 9);
    }

    #[test]
    fn no_interaction_far_from_block() {
        let c = cfg();
        let st = BlockState::initial(&c);
        let s = TrajectorySample::new(0, -50.0, -40.0, 50.0, 0.9);
        let next = step_block_physics(&st, &s, SubtaskId::MOVE_TO_BLOCK, &c);
        assert_eq!(next.position, st.position);
        assert!(!next.held && next.failure.is_none());
    }

    #[test]
    fn pickup_and_collision() {
        let c = cfg();
        let st = BlockState::initial(&c);
        let s = TrajectorySample::new(0, -20.0, 2.0, 1.0, 0.3);
        let next = step_block_physics(&st, &s, SubtaskId::GRAB, &c);
        assert!(next.held);
        let s = TrajectorySample::new(1, 0.0, 0.0, 20.0, 0.2);
        let hit = step_block_physics(&next, &s, SubtaskId::MOVE_TO_RECEPTACLE, &c);
        assert_eq!(hit.failure.unwrap().kind, FailureKind::ObstacleCollision);
        let s = TrajectorySample::new(2, 0.0, 60.0, 30.0, 1.2);
        let later = step_block_physics(&hit, &s, SubtaskId::MOVE_TO_RECEPTACLE, &c);
        assert_eq!(later.failure.unwrap().kind, FailureKind::ObstacleCollision, "first failure is latched");
    }

    #[test]
    fn noiseless_run_succeeds() {
        let c = ScenarioConfig { noise_sigma: NoiseSigma { position_mm: 0.0, grasper_rad: 0.0 }, ..cfg() };
        let (traj, gt) = generate_trajectory(&c).unwrap();
        let states = simulate_block(&traj, &gt.labels, &c).unwrap();
        let last = states.last().unwrap();
        assert!(last.failure.is_none());
        assert!(last.delivered);
        let (s4, e4) = gt.span(SubtaskId::MOVE_TO_RECEPTACLE).unwrap();
        assert!((s4..e4).all(|i| traj.samples()[i].grasper < c.release_threshold));
        assert!((s4..e4).all(|i| states[i].held));
    }

    #[test]
    fn trace_failure_frame_is_first_frame_past_failure_sample() {
        let c = cfg().with_seed(3);
        let (traj, gt) = generate_trajectory(&c).unwrap();
        let (s4, _) = gt.span(SubtaskId::MOVE_TO_RECEPTACLE).unwrap();
        let mut samples = traj.samples().to_vec();
        samples[s4 + 400].grasper = 0.95;
        let faulty = Trajectory::new(samples, traj.rate_hz()).unwrap();
        let trace = block_trace(&faulty, &gt.labels, &c).unwrap();
        let f = trace.failure.unwrap();
        assert_eq!(f.kind, FailureKind::UnintentionalRelease);
        assert_eq!(f.sample, s4 + 400);
        let map = trace.frame_to_sample();
        let expected = map.iter().position(|&m| m >= f.sample).unwrap();
        assert_eq!(f.frame, Some(expected));
        assert!(trace.frames[expected].failure.is_some());
        assert!(trace.frames[expected - 1].failure.is_none());
        assert_eq!(trace.frames[expected].dropped_at, Some(expected));
    }
}
