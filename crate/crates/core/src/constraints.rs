//! Per-subtask safety envelopes learned from fault-free demonstrations.
//!
//! Each (subtask, parameter) cell keeps the observed extrema and the pooled
//! population standard deviation. At query time a margin multiplier `m`
//! widens the closed interval to `[min - m*sigma, max + m*sigma]`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{SubtaskId, Trajectory, TrajectorySample};

pub const CONSTRAINTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParameterId {
    X,
    Y,
    Z,
    Grasper,
}

impl ParameterId {
    pub const ALL: [ParameterId; 4] = [ParameterId::X, ParameterId::Y, ParameterId::Z, ParameterId::Grasper];

    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn read(self, s: &TrajectorySample) -> f64 {
        match self {
            ParameterId::X => s.x,
            ParameterId::Y => s.y,
            ParameterId::Z => s.z,
            ParameterId::Grasper => s.grasper,
        }
    }

    pub fn write(self, s: &mut TrajectorySample, v: f64) {
        match self {
            ParameterId::X => s.x = v,
            ParameterId::Y => s.y = v,
            ParameterId::Z => s.z = v,
            ParameterId::Grasper => s.grasper = v,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            ParameterId::Grasper => "rad",
            _ => "mm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub subtask: SubtaskId,
    pub parameter: ParameterId,
    pub min_obs: f64,
    pub max_obs: f64,
    pub sigma: f64,
}

impl Envelope {
    pub fn bounds(&self, margin: f64) -> (f64, f64) {
        (self.min_obs - margin * self.sigma, self.max_obs + margin * self.sigma)
    }

    /// `None` when `value` lies inside the closed interval.
    #[inline]
    pub fn check(&self, value: f64, margin: f64) -> Option<Violation> {
        let (lo, hi) = self.bounds(margin);
        if value > hi {
            Some(Violation { parameter: self.parameter, value, bound: hi, excess: value - hi })
        } else if value < lo {
            Some(Violation { parameter: self.parameter, value, bound: lo, excess: lo - value })
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub parameter: ParameterId,
    pub value: f64,
    pub bound: f64,
    pub excess: f64,
}

/// Complete 7 x 4 grid of envelopes, subtask-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSet {
    pub version: u32,
    pub envelopes: Vec<Envelope>,
    #[serde(default)]
    pub provenance: Vec<String>,
}

impl ConstraintSet {
    pub fn envelope(&self, subtask: SubtaskId, parameter: ParameterId) -> &Envelope {
        &self.envelopes[subtask.index() * ParameterId::ALL.len() + parameter.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.envelopes.len() != SubtaskId::COUNT * ParameterId::ALL.len() {
            return Err(Error::Input(format!("constraint set has {} envelopes, expected 28", self.envelopes.len())));
        }
        for (i, e) in self.envelopes.iter().enumerate() {
            let (s, p) = (i / 4, i % 4);
            if e.subtask.index() != s || e.parameter.index() != p {
                return Err(Error::Input(format!("envelope {i} is out of order")));
            }
            if !(e.min_obs <= e.max_obs && e.sigma >= 0.0) {
                return Err(Error::Input(format!("envelope {i} has min > max or negative sigma")));
            }
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cs: ConstraintSet = serde_json::from_slice(bytes)?;
        if cs.version != CONSTRAINTS_VERSION {
            return Err(Error::Input(format!("unsupported constraints version {}", cs.version)));
        }
        cs.validate()?;
        Ok(cs)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    /// Markdown table: one row per subtask, min/max/sigma per parameter.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Subtask | Name |");
        for p in ParameterId::ALL {
            let _ = write!(out, " {p:?} min | {p:?} max | {p:?} sd |");
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|---|---|".repeat(4));
        out.push('\n');
        for s in SubtaskId::ALL {
            let _ = write!(out, "| {} | {} |", s, s.name());
            for p in ParameterId::ALL {
                let e = self.envelope(s, p);
                let _ = write!(out, " {:.3} | {:.3} | {:.4} |", e.min_obs, e.max_obs, e.sigma);
            }
            out.push('\n');
        }
        out
    }
}

/// Pooled extrema and population sigma per (subtask, parameter).
pub fn learn_envelopes(corpus: &[(&Trajectory, &[SubtaskId])], provenance: Vec<String>) -> Result<ConstraintSet> {
    const CELLS: usize = SubtaskId::COUNT * 4;
    let mut count = [0usize; CELLS];
    let mut sum = [0.0f64; CELLS];
    let mut min = [f64::INFINITY; CELLS];
    let mut max = [f64::NEG_INFINITY; CELLS];
    for (traj, labels) in corpus {
        if traj.len() != labels.len() {
            return Err(Error::Input(format!("{} labels for {} samples", labels.len(), traj.len())));
        }
        for (s, l) in traj.samples().iter().zip(labels.iter()) {
            for p in ParameterId::ALL {
                let c = l.index() * 4 + p.index();
                let v = p.read(s);
                count[c] += 1;
                sum[c] += v;
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
    }
    for s in SubtaskId::ALL {
        if count[s.index() * 4] == 0 {
            return Err(Error::Coverage(s));
        }
    }
    let mean: Vec<f64> = (0..CELLS).map(|c| sum[c] / count[c] as f64).collect();
    let mut sq = [0.0f64; CELLS];
    for (traj, labels) in corpus {
        for (s, l) in traj.samples().iter().zip(labels.iter()) {
            for p in ParameterId::ALL {
                let c = l.index() * 4 + p.index();
                sq[c] += (p.read(s) - mean[c]).powi(2);
            }
        }
    }
    let envelopes = (0..CELLS)
        .map(|c| Envelope {
            subtask: SubtaskId::ALL[c / 4],
            parameter: ParameterId::ALL[c % 4],
            min_obs: min[c],
            max_obs: max[c],
            sigma: (sq[c] / count[c] as f64).sqrt(),
        })
        .collect();
    Ok(ConstraintSet { version: CONSTRAINTS_VERSION, envelopes, provenance })
}

/// Parameters of `s` lying strictly outside their `subtask` envelope.
pub fn check_sample(cs: &ConstraintSet, subtask: SubtaskId, s: &TrajectorySample, margin: f64) -> Vec<Violation> {
    ParameterId::ALL.iter().filter_map(|&p| cs.envelope(subtask, p).check(p.read(s), margin)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj_from(xs: &[f64]) -> Trajectory {
        let s = xs.iter().enumerate().map(|(i, &x)| TrajectorySample::new(i as i64, x, 0.0, 0.0, 0.5)).collect();
        Trajectory::new(s, 1000.0).unwrap()
    }

    fn all_subtasks(n_each: usize) -> Vec<SubtaskId> {
        SubtaskId::ALL.iter().flat_map(|&s| std::iter::repeat_n(s, n_each)).collect()
    }

    #[test]
    fn extrema_and_sigma_for_subtask_two() {
        // Subtask 2 holds x values {10, 12, 20}; other subtasks hold zeros.
        let mut xs = vec![0.0; 21];
        xs[6..9].copy_from_slice(&[10.0, 12.0, 20.0]);
        let labels = all_subtasks(3);
        let t = traj_from(&xs);
        let cs = learn_envelopes(&[(&t, &labels)], vec![]).unwrap();
        let e = cs.envelope(SubtaskId::GRAB, ParameterId::X);
        let vals = [10.0f64, 12.0, 20.0];
        let mean = vals.iter().sum::<f64>() / 3.0;
        let sigma = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert_eq!((e.min_obs, e.max_obs), (10.0, 20.0));
        assert!((e.sigma - sigma).abs() < 1e-12);
        let z = cs.envelope(SubtaskId::GRAB, ParameterId::Z);
        assert_eq!((z.min_obs, z.max_obs, z.sigma), (0.0, 0.0, 0.0));
    }

    #[test]
    fn pooled_extrema_across_trajectories() {
        let labels = all_subtasks(2);
        let a = traj_from(&[0.0, 1.0].repeat(7));
        let b = traj_from(&[5.0, 6.0].repeat(7));
        let cs = learn_envelopes(&[(&a, &labels), (&b, &labels)], vec!["a".into(), "b".into()]).unwrap();
        let e = cs.envelope(SubtaskId::DROP, ParameterId::X);
        assert_eq!((e.min_obs, e.max_obs), (0.0, 6.0));
        cs.validate().unwrap();
    }

    #[test]
    fn missing_subtask_names_it() {
        let labels: Vec<SubtaskId> = vec![SubtaskId::START; 5];
        let t = traj_from(&[0.0; 5]);
        assert!(
            matches!(learn_envelopes(&[(&t, &labels)], vec![]), Err(Error::Coverage(s)) if s == SubtaskId::MOVE_TO_BLOCK)
        );
    }

    #[test]
    fn boundary_value_is_safe_and_jump_is_flagged() {
        let labels = all_subtasks(2);
        let t = traj_from(&[10.0, 150.0].repeat(7));
        let cs = learn_envelopes(&[(&t, &labels)], vec![]).unwrap();
        let at_max = TrajectorySample::new(0, 150.0, 0.0, 0.0, 0.5);
        assert!(check_sample(&cs, SubtaskId::GRAB, &at_max, 0.0).is_empty());
        let jump = TrajectorySample::new(0, 65_000.0, 0.0, 0.0, 0.5);
        let v = check_sample(&cs, SubtaskId::GRAB, &jump, 1.0);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].parameter, ParameterId::X);
        assert!(v[0].excess > 60_000.0);
    }

    #[test]
    fn json_roundtrip_and_version_check() {
        let labels = all_subtasks(2);
        let t = traj_from(&[1.0, 2.0].repeat(7));
        let cs = learn_envelopes(&[(&t, &labels)], vec!["t".into()]).unwrap();
        let back = ConstraintSet::from_json(&cs.to_json().unwrap()).unwrap();
        assert_eq!(back, cs);
        let mut bad = cs.clone();
        bad.version = 9;
        assert!(ConstraintSet::from_json(&serde_json::to_vec(&bad).unwrap()).is_err());
        assert!(cs.to_markdown().lines().count() == 9);
    }
}
