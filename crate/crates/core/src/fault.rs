//! Fault injection by rewriting logged trajectory samples.
//!
//! A [`FaultSpec`] targets one channel over a window of samples and either
//! overwrites it, offsets it, or ramps it linearly from its pre-window value.
//! Samples outside the window are copied unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::ParameterId;
use crate::error::{Error, Result};
use crate::trajectory::{SubtaskId, Trajectory};

pub const FAULT_MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultMode {
    SetTo,
    Add,
    /// Linear ramp reaching `value` on the last window sample.
    Ramp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStart {
    Sample(usize),
    /// `fraction` of the way into the subtask's span.
    Subtask {
        subtask: SubtaskId,
        fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub target: ParameterId,
    pub mode: FaultMode,
    pub value: f64,
    pub start: WindowStart,
    pub duration: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl FaultSpec {
    /// Converts a subtask-relative start into a sample index.
    pub fn resolve(&self, labels: &[SubtaskId]) -> Result<FaultSpec> {
        let start = match self.start {
            WindowStart::Sample(i) => i,
            WindowStart::Subtask { subtask, fraction } => {
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(Error::Spec(format!("start fraction {fraction} outside [0, 1]")));
                }
                let (a, b) =
                    span_of(labels, subtask).ok_or_else(|| Error::Spec(format!("subtask {subtask} is empty")))?;
                (a + ((b - a) as f64 * fraction).floor() as usize).min(b - 1)
            }
        };
        Ok(FaultSpec { start: WindowStart::Sample(start), ..*self })
    }

    /// Resolved `[start, end)`; errors unless the window lies inside `0..n`.
    pub fn window(&self, n: usize) -> Result<(usize, usize)> {
        let WindowStart::Sample(start) = self.start else {
            return Err(Error::Spec("window start is not resolved to a sample index".into()));
        };
        if self.duration == 0 {
            return Err(Error::Spec("fault duration must be at least 1 sample".into()));
        }
        if !self.value.is_finite() {
            return Err(Error::Spec(format!("fault value {} is not finite", self.value)));
        }
        let end = start.checked_add(self.duration).filter(|&e| e <= n);
        match end {
            Some(end) => Ok((start, end)),
            None => Err(Error::Spec(format!("window [{start}, {start}+{}) exceeds {n} samples", self.duration))),
        }
    }
}

fn span_of(labels: &[SubtaskId], s: SubtaskId) -> Option<(usize, usize)> {
    let a = labels.iter().position(|&l| l == s)?;
    let b = labels.iter().rposition(|&l| l == s)? + 1;
    Some((a, b))
}

pub fn inject(traj: &Trajectory, spec: &FaultSpec) -> Result<Trajectory> {
    let (start, end) = spec.window(traj.len())?;
    let mut samples = traj.samples().to_vec();
    let p = spec.target;
    let origin = p.read(&samples[start.saturating_sub(1)]);
    for (k, s) in samples[start..end].iter_mut().enumerate() {
        let v = match spec.mode {
            FaultMode::SetTo => spec.value,
            FaultMode::Add => p.read(s) + spec.value,
            FaultMode::Ramp => origin + (spec.value - origin) * (k + 1) as f64 / spec.duration as f64,
        };
        p.write(s, v);
    }
    Trajectory::new(samples, traj.rate_hz())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub subtasks: Vec<SubtaskId>,
    /// Closed range for the start offset, as a fraction of the placement span.
    pub start_fraction: [f64; 2],
    /// Keep the window inside the contiguous placement span holding its start.
    pub contain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub name: String,
    pub n_trials: usize,
    pub target: ParameterId,
    pub mode: FaultMode,
    pub value_range: [f64; 2],
    /// Closed range of window lengths in samples.
    pub duration_range: [usize; 2],
    pub placement: Placement,
    pub seed: u64,
}

impl CampaignSpec {
    /// X forced to a value in [300, 65000] mm anywhere in the task.
    pub fn sudden_jump(n_trials: usize, seed: u64) -> Self {
        Self {
            name: "sudden-jump".into(),
            n_trials,
            target: ParameterId::X,
            mode: FaultMode::SetTo,
            value_range: [300.0, 65_000.0],
            duration_range: [100, 1000],
            placement: Placement { subtasks: SubtaskId::ALL.to_vec(), start_fraction: [0.0, 1.0], contain: false },
            seed,
        }
    }

    /// Grasper ramped to a value in [0.1, 1.4] rad while the block is carried.
    pub fn block_drop(n_trials: usize, seed: u64) -> Self {
        Self {
            name: "block-drop".into(),
            n_trials,
            target: ParameterId::Grasper,
            mode: FaultMode::Ramp,
            value_range: [0.1, 1.4],
            duration_range: [500, 1500],
            placement: Placement {
                subtasks: vec![SubtaskId::MOVE_UP, SubtaskId::MOVE_TO_RECEPTACLE],
                start_fraction: [0.4, 0.7],
                contain: true,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [vlo, vhi] = self.value_range;
        let [dlo, dhi] = self.duration_range;
        let [flo, fhi] = self.placement.start_fraction;
        if self.n_trials == 0 {
            return Err(Error::Spec("campaign needs at least one trial".into()));
        }
        if !(vlo.is_finite() && vhi.is_finite() && vlo <= vhi) {
            return Err(Error::Spec(format!("bad value range [{vlo}, {vhi}]")));
        }
        if dlo == 0 || dlo > dhi {
            return Err(Error::Spec(format!("bad duration range [{dlo}, {dhi}]")));
        }
        if !(0.0 <= flo && flo <= fhi && fhi <= 1.0) {
            return Err(Error::Spec(format!("bad start fraction range [{flo}, {fhi}]")));
        }
        if self.placement.subtasks.is_empty() {
            return Err(Error::Spec("placement names no subtask".into()));
        }
        Ok(())
    }

    /// Per-trial generator, independent of how trials are scheduled.
    pub fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        let mut z = self.seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
    }

    /// Draws trial `trial` and resolves its window against `labels`.
    pub fn sample_trial(&self, trial: usize, labels: &[SubtaskId]) -> Result<FaultSpec> {
        self.validate()?;
        // Contiguous runs of samples whose label is in the placement set.
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            if self.placement.subtasks.contains(l) {
                match runs.last_mut() {
                    Some(r) if r.1 == i => r.1 = i + 1,
                    _ => runs.push((i, i + 1)),
                }
            }
        }
        for &s in &self.placement.subtasks {
            if !labels.contains(&s) {
                return Err(Error::Spec(format!("placement subtask {s} is empty")));
            }
        }
        let total: usize = runs.iter().map(|r| r.1 - r.0).sum();
        let mut rng = self.trial_rng(trial);
        let seed: u64 = rng.random();
        let value = uniform_closed(&mut rng, self.value_range);
        let duration = rng.random_range(self.duration_range[0]..=self.duration_range[1]);
        let u = uniform_closed(&mut rng, self.placement.start_fraction);
        let mut offset = ((total as f64 * u).floor() as usize).min(total - 1);
        let (mut start, mut limit) = (0, labels.len());
        for &(a, b) in &runs {
            if offset < b - a {
                start = a + offset;
                if self.placement.contain {
                    limit = b;
                }
                break;
            }
            offset -= b - a;
        }
        let duration = duration.min(limit - start);
        Ok(FaultSpec {
            target: self.target,
            mode: self.mode,
            value,
            start: WindowStart::Sample(start),
            duration,
            seed: Some(seed),
        })
    }
}

fn uniform_closed(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// All trials drawn against one labeling.
pub fn sample_campaign(cs: &CampaignSpec, labels: &[SubtaskId]) -> Result<Vec<FaultSpec>> {
    (0..cs.n_trials).map(|t| cs.sample_trial(t, labels)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub trial: usize,
    pub base_seed: u64,
    pub spec: FaultSpec,
    pub window: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultManifest {
    pub version: u32,
    pub campaign: CampaignSpec,
    pub trials: Vec<ManifestEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectorySample;

    fn ramp_traj(n: usize) -> Trajectory {
        let s = (0..n).map(|i| TrajectorySample::new(i as i64, i as f64, -(i as f64), 1.5, 0.3)).collect();
        Trajectory::new(s, 1000.0).unwrap()
    }

    fn spec(mode: FaultMode, target: ParameterId, value: f64, start: usize, duration: usize) -> FaultSpec {
        FaultSpec { target, mode, value, start: WindowStart::Sample(start), duration, seed: None }
    }

    #[test]
    fn add_zero_is_identity() {
        let t = ramp_traj(50);
        assert_eq!(inject(&t, &spec(FaultMode::Add, ParameterId::Y, 0.0, 10, 20)).unwrap(), t);
    }

    #[test]
    fn set_grasper_window() {
        let t = ramp_traj(5000);
        let out = inject(&t, &spec(FaultMode::SetTo, ParameterId::Grasper, 1.4, 3000, 1000)).unwrap();
        for (i, (a, b)) in t.samples().iter().zip(out.samples()).enumerate() {
            if (3000..4000).contains(&i) {
                assert_eq!(b.grasper, 1.4);
                assert_eq!((a.x, a.y, a.z, a.t_ns), (b.x, b.y, b.z, b.t_ns));
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn set_x_jump_and_idempotence() {
        let t = ramp_traj(300);
        let f = spec(FaultMode::SetTo, ParameterId::X, 65_000.0, 100, 100);
        let once = inject(&t, &f).unwrap();
        assert!(once.samples()[100..200].iter().all(|s| s.x == 65_000.0));
        assert_eq!(inject(&once, &f).unwrap(), once);
    }

    #[test]
    fn ramp_reaches_target_linearly() {
        let t = ramp_traj(20);
        let out = inject(&t, &spec(FaultMode::Ramp, ParameterId::Grasper, 1.3, 5, 4)).unwrap();
        let g: Vec<f64> = out.samples()[4..10].iter().map(|s| s.grasper).collect();
        let expect = [0.3, 0.55, 0.8, 1.05, 1.3, 0.3];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{g:?}");
        }
    }

    #[test]
    fn window_errors() {
        let t = ramp_traj(10);
        assert!(matches!(inject(&t, &spec(FaultMode::Add, ParameterId::X, 1.0, 5, 6)), Err(Error::Spec(_))));
        assert!(matches!(inject(&t, &spec(FaultMode::Add, ParameterId::X, 1.0, 5, 0)), Err(Error::Spec(_))));
        let rel = FaultSpec {
            start: WindowStart::Subtask { subtask: SubtaskId::GRAB, fraction: 0.5 },
            ..spec(FaultMode::Add, ParameterId::X, 1.0, 0, 1)
        };
        assert!(matches!(inject(&t, &rel), Err(Error::Spec(_))));
    }

    #[test]
    fn subtask_relative_resolution() {
        let labels: Vec<SubtaskId> = SubtaskId::ALL.iter().flat_map(|&s| std::iter::repeat_n(s, 10)).collect();
        let rel = FaultSpec {
            start: WindowStart::Subtask { subtask: SubtaskId::MOVE_UP, fraction: 0.5 },
            ..spec(FaultMode::Add, ParameterId::X, 1.0, 0, 3)
        };
        assert_eq!(rel.resolve(&labels).unwrap().start, WindowStart::Sample(35));
        let end = FaultSpec { start: WindowStart::Subtask { subtask: SubtaskId::MOVE_UP, fraction: 1.0 }, ..rel };
        assert_eq!(end.resolve(&labels).unwrap().start, WindowStart::Sample(39));
        assert!(rel.resolve(&labels[..20]).is_err());
    }

    #[test]
    fn campaign_is_deterministic_and_in_range() {
        let labels: Vec<SubtaskId> = SubtaskId::ALL.iter().flat_map(|&s| std::iter::repeat_n(s, 1000)).collect();
        let cs = CampaignSpec { n_trials: 20, ..CampaignSpec::block_drop(20, 7) };
        let a = sample_campaign(&cs, &labels).unwrap();
        assert_eq!(a, sample_campaign(&cs, &labels).unwrap());
        assert_eq!(a.len(), 20);
        for f in &a {
            assert!((0.1..=1.4).contains(&f.value));
            let (s, e) = f.window(labels.len()).unwrap();
            assert!(s >= 3000 && e <= 5000);
        }
    }

    #[test]
    fn placement_in_one_subtask_stays_inside() {
        let labels: Vec<SubtaskId> = SubtaskId::ALL.iter().flat_map(|&s| std::iter::repeat_n(s, 300)).collect();
        let mut cs = CampaignSpec::sudden_jump(50, 3);
        cs.placement =
            Placement { subtasks: vec![SubtaskId::MOVE_TO_RECEPTACLE], start_fraction: [0.0, 1.0], contain: true };
        for f in sample_campaign(&cs, &labels).unwrap() {
            let (s, e) = f.window(labels.len()).unwrap();
            assert!(s >= 1200 && e <= 1500 && e > s);
        }
        let short = &labels[..1000];
        assert!(matches!(sample_campaign(&cs, short), Err(Error::Spec(_))));
    }

    #[test]
    fn fault_spec_json_shape() {
        let f = FaultSpec {
            start: WindowStart::Subtask { subtask: SubtaskId::DROP, fraction: 0.25 },
            ..spec(FaultMode::Ramp, ParameterId::Grasper, 1.0, 0, 5)
        };
        let j = serde_json::to_string(&f).unwrap();
        assert_eq!(
            j,
            r#"{"target":"Grasper","mode":"Ramp","value":1.0,"start":{"subtask":{"subtask":5,"fraction":0.25}},"duration":5,"seed":null}"#
        );
        assert_eq!(serde_json::from_str::<FaultSpec>(&j).unwrap(), f);
    }
}
