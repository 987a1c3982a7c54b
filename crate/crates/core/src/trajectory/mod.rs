//! Kinematics data model: samples, trajectories, subtask vocabulary.
//!
//! A [`Trajectory`] is validated once at construction and immutable after
//! that, so downstream stages never re-check ordering or ranges.

mod frames;
mod io;

pub use frames::{
    frame_to_sample_indices, read_pgm_dir, synchronize, write_pgm_dir, Frame, FrameSequence, SyncedRecording,
};
pub use io::{parse_labels, parse_trajectory, write_labels, write_trajectory, JigsawsLayout, TrajectoryFormat};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NANOS_PER_SEC: i64 = 1_000_000_000;

/// One kinematics packet: end-effector position (mm) and grasper angle (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySample {
    pub t_ns: i64,
    #[serde(rename = "x_mm")]
    pub x: f64,
    #[serde(rename = "y_mm")]
    pub y: f64,
    #[serde(rename = "z_mm")]
    pub z: f64,
    #[serde(rename = "grasper_rad")]
    pub grasper: f64,
}

impl TrajectorySample {
    pub fn new(t_ns: i64, x: f64, y: f64, z: f64, grasper: f64) -> Self {
        Self { t_ns, x, y, z, grasper }
    }

    /// Euclidean distance of the end-effector from the workspace origin.
    pub fn distance_from_origin(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Feature vector used by segmentation and context tracking.
    pub fn features(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.grasper]
    }

    pub(crate) fn check(&self, line: usize) -> Result<()> {
        for (field, value) in [("x_mm", self.x), ("y_mm", self.y), ("z_mm", self.z)] {
            if !value.is_finite() {
                return Err(Error::Range { line, field, value });
            }
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.grasper) {
            return Err(Error::Range { line, field: "grasper_rad", value: self.grasper });
        }
        Ok(())
    }
}

/// Ordered, validated kinematics stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
    rate_hz: f64,
}

impl Trajectory {
    pub const DEFAULT_RATE_HZ: f64 = 1000.0;

    /// Validates ordering and ranges. Errors report the zero-based sample
    /// index in the `line` field.
    pub fn new(samples: Vec<TrajectorySample>, rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::Config(format!("sample rate must be positive, got {rate_hz}")));
        }
        for (i, s) in samples.iter().enumerate() {
            s.check(i)?;
            if i > 0 && s.t_ns <= samples[i - 1].t_ns {
                return Err(Error::Ordering { line: i, prev_ns: samples[i - 1].t_ns, t_ns: s.t_ns });
            }
        }
        Ok(Self { samples, rate_hz })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn timestamps(&self) -> impl Iterator<Item = i64> + '_ {
        self.samples.iter().map(|s| s.t_ns)
    }

    /// First `n` samples (at least one).
    pub fn prefix(&self, n: usize) -> Trajectory {
        let n = n.clamp(1, self.samples.len());
        Trajectory { samples: self.samples[..n].to_vec(), rate_hz: self.rate_hz }
    }

    pub fn into_samples(self) -> Vec<TrajectorySample> {
        self.samples
    }
}

/// Debridement subtask, 0 (Start) through 6 (End).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SubtaskId(u8);

impl SubtaskId {
    pub const COUNT: usize = 7;

    pub const START: SubtaskId = SubtaskId(0);
    pub const MOVE_TO_BLOCK: SubtaskId = SubtaskId(1);
    pub const GRAB: SubtaskId = SubtaskId(2);
    pub const MOVE_UP: SubtaskId = SubtaskId(3);
    pub const MOVE_TO_RECEPTACLE: SubtaskId = SubtaskId(4);
    pub const DROP: SubtaskId = SubtaskId(5);
    pub const END: SubtaskId = SubtaskId(6);

    pub const ALL: [SubtaskId; 7] =
        [Self::START, Self::MOVE_TO_BLOCK, Self::GRAB, Self::MOVE_UP, Self::MOVE_TO_RECEPTACLE, Self::DROP, Self::END];

    pub fn new(id: u8) -> Option<Self> {
        (usize::from(id) < Self::COUNT).then_some(SubtaskId(id))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn next(self) -> Option<Self> {
        Self::new(self.0 + 1)
    }

    pub fn name(self) -> &'static str {
        match self.0 {
            0 => "Start",
            1 => "Moving to the block",
            2 => "Grabbing the block",
            3 => "Moving up",
            4 => "Moving to the receptacle",
            5 => "Dropping the block",
            _ => "End",
        }
    }
}

impl TryFrom<u8> for SubtaskId {
    type Error = String;

    fn try_from(id: u8) -> std::result::Result<Self, Self::Error> {
        SubtaskId::new(id).ok_or_else(|| format!("subtask id {id} is not in 0..=6"))
    }
}

impl From<SubtaskId> for u8 {
    fn from(id: SubtaskId) -> u8 {
        id.0
    }
}

impl fmt::Display for SubtaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Sample indices where the label changes (index of the first sample of the
/// new run).
pub fn transitions_of(labels: &[SubtaskId]) -> Vec<usize> {
    labels.windows(2).enumerate().filter(|(_, w)| w[0] != w[1]).map(|(i, _)| i + 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(x: f64, y: f64, z: f64) -> TrajectorySample {
        TrajectorySample::new(0, x, y, z, 0.3)
    }

    #[test]
    fn distance_from_origin_examples() {
        assert_eq!(sample(0.0, 0.0, 0.0).distance_from_origin(), 0.0);
        assert_eq!(sample(3.0, 4.0, 0.0).distance_from_origin(), 5.0);
        assert_eq!(sample(1.0, 2.0, 2.0).distance_from_origin(), 3.0);
    }

    #[test]
    fn rejects_repeated_timestamp() {
        let s = vec![TrajectorySample::new(0, 1.0, 2.0, 2.0, 0.3), TrajectorySample::new(0, 1.1, 2.0, 2.0, 0.3)];
        assert!(matches!(Trajectory::new(s, 1000.0), Err(Error::Ordering { line: 1, .. })));
    }

    #[test]
    fn rejects_non_finite_and_grasper_out_of_range() {
        let bad = vec![TrajectorySample::new(0, f64::NAN, 0.0, 0.0, 0.3)];
        assert!(matches!(Trajectory::new(bad, 1000.0), Err(Error::Range { field: "x_mm", .. })));
        let bad = vec![TrajectorySample::new(0, 0.0, 0.0, 0.0, 4.0)];
        assert!(matches!(Trajectory::new(bad, 1000.0), Err(Error::Range { field: "grasper_rad", .. })));
        assert!(matches!(Trajectory::new(vec![], 1000.0), Err(Error::EmptyInput)));
    }

    #[test]
    fn subtask_ids() {
        assert_eq!(SubtaskId::ALL.len(), SubtaskId::COUNT);
        assert!(SubtaskId::new(7).is_none());
        assert_eq!(SubtaskId::MOVE_TO_BLOCK.name(), "Moving to the block");
        assert_eq!(SubtaskId::END.next(), None);
        let json = serde_json::to_string(&SubtaskId::DROP).unwrap();
        assert_eq!(json, "5");
        assert!(serde_json::from_str::<SubtaskId>("9").is_err());
    }

    #[test]
    fn transitions_mark_first_sample_of_new_run() {
        let l: Vec<SubtaskId> = [0u8, 0, 1, 1, 1, 2].iter().map(|&i| SubtaskId::new(i).unwrap()).collect();
        assert_eq!(transitions_of(&l), vec![2, 5]);
    }

    proptest::proptest! {
        #[test]
        fn norm_dominates_components(x in -1e5f64..1e5, y in -1e5f64..1e5, z in -1e5f64..1e5) {
            let d = sample(x, y, z).distance_from_origin();
            proptest::prop_assert!(d >= x.abs().max(y.abs()).max(z.abs()));
        }
    }
}
