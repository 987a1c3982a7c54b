//! Streaming context-aware safety monitor.
//!
//! The subtask estimate follows a left-to-right automaton: it advances to
//! `current + 1` once the mixture assigns that subtask for `dwell`
//! consecutive samples and never moves back. Each parameter keeps its own
//! consecutive-violation counter; an alert fires when the counter reaches
//! `debounce` and the episode ends when the value returns in bounds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintSet, ParameterId};
use crate::error::{Error, Result};
use crate::segmentation::GmmModel;
use crate::trajectory::{SubtaskId, Trajectory, TrajectorySample};

pub const DEFAULT_DEBOUNCE: usize = 20;
pub const DEFAULT_DWELL: usize = 50;

/// Mixture plus the subtask each of its components stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextModel {
    pub model: GmmModel,
    pub cluster_subtask: Vec<SubtaskId>,
}

impl ContextModel {
    /// Component `c` stands for subtask `c`.
    pub fn identity(model: GmmModel) -> Result<Self> {
        let cluster_subtask = (0..model.k)
            .map(|c| SubtaskId::new(c as u8).ok_or_else(|| Error::Input(format!("component {c} has no subtask"))))
            .collect::<Result<_>>()?;
        Ok(Self { model, cluster_subtask })
    }

    #[inline]
    pub fn classify(&self, s: &TrajectorySample) -> SubtaskId {
        self.cluster_subtask[self.model.predict(&s.features())]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub context: ContextModel,
    pub constraints: ConstraintSet,
    pub margin: f64,
    pub debounce: usize,
    pub dwell: usize,
}

impl MonitorConfig {
    pub fn new(context: ContextModel, constraints: ConstraintSet, margin: f64) -> Self {
        Self { context, constraints, margin, debounce: DEFAULT_DEBOUNCE, dwell: DEFAULT_DWELL }
    }

    pub fn validate(&self) -> Result<()> {
        if self.debounce == 0 || self.dwell == 0 {
            return Err(Error::Config("debounce and dwell must be at least 1".into()));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::Config(format!("margin {} must be finite and non-negative", self.margin)));
        }
        if self.context.cluster_subtask.len() != self.context.model.k {
            return Err(Error::Config("cluster map does not cover every component".into()));
        }
        self.constraints.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub t_ns: i64,
    pub sample: usize,
    pub subtask: SubtaskId,
    pub parameter: ParameterId,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
}

impl Alert {
    /// First sample of the violation episode that raised this alert.
    pub fn episode_start(&self, debounce: usize) -> usize {
        self.sample + 1 - debounce
    }
}

/// Left-to-right subtask automaton with dwell hysteresis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ContextTracker {
    pub current: SubtaskId,
    pub pending_advance: usize,
}

impl ContextTracker {
    /// Moves to `current + 1` after `dwell` consecutive votes for it.
    #[inline]
    pub fn observe(&mut self, estimate: SubtaskId, dwell: usize) -> SubtaskId {
        if let Some(next) = self.current.next() {
            if estimate == next {
                self.pending_advance += 1;
                if self.pending_advance >= dwell {
                    self.current = next;
                    self.pending_advance = 0;
                }
            } else {
                self.pending_advance = 0;
            }
        }
        self.current
    }
}

/// Online subtask estimate for every sample of `traj`.
pub fn track_subtasks(traj: &Trajectory, context: &ContextModel, dwell: usize) -> Vec<SubtaskId> {
    let mut tracker = ContextTracker::default();
    traj.samples().iter().map(|s| tracker.observe(context.classify(s), dwell)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MonitorState {
    pub context: ContextTracker,
    pub samples_seen: usize,
    pub violation_counters: [usize; 4],
    pub alerts_emitted: usize,
}

impl MonitorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current(&self) -> SubtaskId {
        self.context.current
    }

    /// Advances the state in place. `oracle` overrides the context estimate.
    #[inline]
    pub fn step(
        &mut self,
        s: &TrajectorySample,
        cfg: &MonitorConfig,
        oracle: Option<SubtaskId>,
        alerts: &mut Vec<Alert>,
    ) {
        let current = match oracle {
            Some(label) => {
                self.context.current = label;
                label
            }
            None => self.context.observe(cfg.context.classify(s), cfg.dwell),
        };
        for p in ParameterId::ALL {
            let counter = &mut self.violation_counters[p.index()];
            match cfg.constraints.envelope(current, p).check(p.read(s), cfg.margin) {
                Some(v) => {
                    *counter += 1;
                    if *counter == cfg.debounce {
                        self.alerts_emitted += 1;
                        alerts.push(Alert {
                            t_ns: s.t_ns,
                            sample: self.samples_seen,
                            subtask: current,
                            parameter: p,
                            value: v.value,
                            bound: v.bound,
                            margin: cfg.margin,
                        });
                    }
                }
                None => *counter = 0,
            }
        }
        self.samples_seen += 1;
    }
}

/// Pure single-sample transition.
pub fn monitor_step(state: &MonitorState, s: &TrajectorySample, cfg: &MonitorConfig) -> (MonitorState, Vec<Alert>) {
    let mut next = *state;
    let mut alerts = Vec::new();
    next.step(s, cfg, None, &mut alerts);
    (next, alerts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorRun {
    pub alerts: Vec<Alert>,
    pub subtask_trace: Vec<SubtaskId>,
}

impl MonitorRun {
    pub fn final_subtask(&self) -> Option<SubtaskId> {
        self.subtask_trace.last().copied()
    }
}

/// Fold of the monitor over a trajectory, using the online context estimate.
pub fn run_monitor(traj: &Trajectory, cfg: &MonitorConfig) -> Result<MonitorRun> {
    run(traj, cfg, None)
}

/// Same fold with the subtask supplied per sample instead of estimated.
pub fn run_monitor_with_context(traj: &Trajectory, cfg: &MonitorConfig, labels: &[SubtaskId]) -> Result<MonitorRun> {
    if labels.len() != traj.len() {
        return Err(Error::Input(format!("{} context labels for {} samples", labels.len(), traj.len())));
    }
    run(traj, cfg, Some(labels))
}

fn run(traj: &Trajectory, cfg: &MonitorConfig, labels: Option<&[SubtaskId]>) -> Result<MonitorRun> {
    cfg.validate()?;
    let mut state = MonitorState::new();
    let mut alerts = Vec::new();
    let mut subtask_trace = Vec::with_capacity(traj.len());
    for (i, s) in traj.samples().iter().enumerate() {
        state.step(s, cfg, labels.map(|l| l[i]), &mut alerts);
        subtask_trace.push(state.current());
    }
    Ok(MonitorRun { alerts, subtask_trace })
}

pub fn write_alerts_jsonl<W: Write>(alerts: &[Alert], mut sink: W) -> Result<()> {
    for a in alerts {
        serde_json::to_writer(&mut sink, a)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_alerts_jsonl(text: &str) -> Result<Vec<Alert>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Envelope;
    use crate::segmentation::{Features, GmmModel};

    /// Seven well-separated one-dimensional classes along x.
    fn toy_config(debounce: usize, dwell: usize) -> MonitorConfig {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..7 {
            for j in 0..20 {
                rows.push([c as f64 * 100.0 + j as f64 * 0.1, 0.0 + j as f64 * 0.01, 0.0, 0.5]);
                labels.push(c);
            }
        }
        let x = Features::from_rows(4, rows.iter().map(|r| &r[..])).unwrap();
        let model = GmmModel::from_labels(&x, &labels, 7, 1e-6).unwrap();
        let envelopes = SubtaskId::ALL
            .iter()
            .flat_map(|&s| {
                ParameterId::ALL.iter().map(move |&p| {
                    let (lo, hi) = match p {
                        ParameterId::X => (-50.0, 700.0),
                        ParameterId::Grasper => (0.0, 1.0),
                        _ => (-10.0, 10.0),
                    };
                    Envelope { subtask: s, parameter: p, min_obs: lo, max_obs: hi, sigma: 1.0 }
                })
            })
            .collect();
        let constraints = ConstraintSet { version: 1, envelopes, provenance: vec![] };
        MonitorConfig {
            debounce,
            dwell,
            ..MonitorConfig::new(ContextModel::identity(model).unwrap(), constraints, 0.0)
        }
    }

    fn walk(per_class: usize) -> Vec<TrajectorySample> {
        (0..7 * per_class)
            .map(|i| TrajectorySample::new(i as i64 * 1_000_000, (i / per_class) as f64 * 100.0 + 1.0, 0.05, 0.0, 0.5))
            .collect()
    }

    #[test]
    fn clean_walk_reaches_last_subtask_without_alerts() {
        let cfg = toy_config(20, 5);
        let t = Trajectory::new(walk(30), 1000.0).unwrap();
        let run = run_monitor(&t, &cfg).unwrap();
        assert!(run.alerts.is_empty());
        assert_eq!(run.final_subtask(), Some(SubtaskId::END));
        assert!(run.subtask_trace.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sustained_jump_gives_one_alert_after_debounce() {
        let cfg = toy_config(20, 5);
        let mut s = walk(100);
        for v in &mut s[150..190] {
            v.y = 65_000.0;
        }
        let t = Trajectory::new(s, 1000.0).unwrap();
        let run = run_monitor(&t, &cfg).unwrap();
        assert_eq!(run.alerts.len(), 1);
        let a = run.alerts[0];
        assert_eq!((a.parameter, a.sample, a.bound), (ParameterId::Y, 150 + 20 - 1, 10.0));
        assert_eq!(a.episode_start(cfg.debounce), 150);
    }

    #[test]
    fn single_spike_is_debounced() {
        let cfg = toy_config(20, 5);
        let mut s = walk(30);
        s[40].z = 1e4;
        let t = Trajectory::new(s, 1000.0).unwrap();
        assert!(run_monitor(&t, &cfg).unwrap().alerts.is_empty());
    }

    #[test]
    fn two_episodes_two_alerts() {
        let cfg = toy_config(3, 5);
        let mut s = walk(30);
        for i in [10, 11, 12, 13, 20, 21, 22] {
            s[i].grasper = 2.0;
        }
        let t = Trajectory::new(s, 1000.0).unwrap();
        let run = run_monitor(&t, &cfg).unwrap();
        assert_eq!(run.alerts.iter().map(|a| a.sample).collect::<Vec<_>>(), vec![12, 22]);
    }

    #[test]
    fn fold_of_monitor_step_matches_run() {
        let cfg = toy_config(4, 5);
        let mut s = walk(20);
        for v in &mut s[30..40] {
            v.x = -900.0;
        }
        let t = Trajectory::new(s.clone(), 1000.0).unwrap();
        let run = run_monitor(&t, &cfg).unwrap();
        let mut state = MonitorState::new();
        let mut all = Vec::new();
        for v in &s {
            let (next, alerts) = monitor_step(&state, v, &cfg);
            state = next;
            all.extend(alerts);
        }
        assert_eq!(all, run.alerts);
        assert_eq!(Some(state.current()), run.final_subtask());
    }

    #[test]
    fn oracle_context_overrides_estimate() {
        let cfg = toy_config(20, 5);
        let t = Trajectory::new(walk(10), 1000.0).unwrap();
        let labels = vec![SubtaskId::GRAB; 70];
        let run = run_monitor_with_context(&t, &cfg, &labels).unwrap();
        assert!(run.subtask_trace.iter().all(|&s| s == SubtaskId::GRAB));
        assert!(run_monitor_with_context(&t, &cfg, &labels[..3]).is_err());
    }

    #[test]
    fn zero_debounce_rejected() {
        let cfg = toy_config(0, 5);
        let t = Trajectory::new(walk(2), 1000.0).unwrap();
        assert!(matches!(run_monitor(&t, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn alerts_jsonl_roundtrip() {
        let a = Alert {
            t_ns: 5,
            sample: 5,
            subtask: SubtaskId::MOVE_UP,
            parameter: ParameterId::Grasper,
            value: 1.25,
            bound: 0.3000000000000001,
            margin: 1.0,
        };
        let mut buf = Vec::new();
        write_alerts_jsonl(&[a, a], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("{\"t_ns\":5,\"sample\":5,\"subtask\":3,\"parameter\":\"Grasper\""));
        assert_eq!(parse_alerts_jsonl(&text).unwrap(), vec![a, a]);
    }
}
