//! Unsupervised subtask segmentation.
//!
//! One clustering layer on (x, y, z, grasper): a Gaussian mixture labels
//! every sample, short runs are absorbed by a minimum-dwell filter, and the
//! surviving change points are pruned against reference transition
//! fractions before being mapped onto the canonical subtask order.

mod gmm;

pub use gmm::{fit_gmm, fit_gmm_with, log_sum_exp, Features, FitOptions, GmmFit, GmmModel, Standardization};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{SubtaskId, Trajectory};

pub const DEFAULT_MIN_DWELL: usize = 50;

/// Feature matrix (x, y, z, grasper) of a trajectory, every `stride`-th sample.
pub fn trajectory_features(traj: &Trajectory, stride: usize) -> Features {
    let mut f = Features::new(4);
    for s in traj.samples().iter().step_by(stride.max(1)) {
        f.push(&s.features()).expect("validated trajectory has finite features");
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub index: usize,
    pub imputed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentLabeling {
    /// Per-sample cluster after dwell filtering.
    pub clusters: Vec<usize>,
    /// Per-sample posterior over mixture components.
    pub responsibilities: Vec<Vec<f64>>,
    pub transitions: Vec<Transition>,
}

impl SegmentLabeling {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn transition_indices(&self) -> Vec<usize> {
        self.transitions.iter().map(|t| t.index).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTransitions {
    pub fractions: Vec<f64>,
    pub tolerance: f64,
}

impl ReferenceTransitions {
    pub const DEFAULT_TOLERANCE: f64 = 0.05;

    pub fn new(fractions: Vec<f64>, tolerance: f64) -> Result<Self> {
        if fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config("reference fractions must lie in (0, 1)".into()));
        }
        if fractions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("reference fractions must be strictly increasing".into()));
        }
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return Err(Error::Config(format!("tolerance must lie in (0, 1), got {tolerance}")));
        }
        Ok(Self { fractions, tolerance })
    }

    /// Mean transition fractions over a labeled corpus of
    /// (sample count, transition indices) pairs.
    pub fn from_corpus(corpus: &[(usize, Vec<usize>)], tolerance: f64) -> Result<Self> {
        let first = corpus.first().ok_or(Error::EmptyInput)?;
        let m = first.1.len();
        let mut sums = vec![0.0; m];
        for (n, tr) in corpus {
            if tr.len() != m {
                return Err(Error::Input(format!("corpus mixes {} and {} transitions", m, tr.len())));
            }
            for (s, &t) in sums.iter_mut().zip(tr) {
                *s += t as f64 / *n as f64;
            }
        }
        Self::new(sums.iter().map(|s| s / corpus.len() as f64).collect(), tolerance)
    }
}

/// Run-length encoding: (cluster, start, end exclusive).
fn runs_of(labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.0 == l => r.2 = i + 1,
            _ => runs.push((l, i, i + 1)),
        }
    }
    runs
}

fn coalesce(runs: &mut Vec<(usize, usize, usize)>) {
    let mut out: Vec<(usize, usize, usize)> = Vec::with_capacity(runs.len());
    for &r in runs.iter() {
        match out.last_mut() {
            Some(last) if last.0 == r.0 => last.2 = r.2,
            _ => out.push(r),
        }
    }
    *runs = out;
}

/// Absorbs runs shorter than `min_dwell` into the neighbor whose cluster
/// has the higher mean responsibility over the short run. Shortest runs go
/// first; ties go to the earlier run and to the left neighbor.
pub fn dwell_filter(clusters: &[usize], responsibilities: &[Vec<f64>], min_dwell: usize) -> Vec<usize> {
    let mut runs = runs_of(clusters);
    loop {
        if runs.len() <= 1 {
            break;
        }
        let Some((ri, _)) =
            runs.iter().enumerate().filter(|(_, r)| r.2 - r.1 < min_dwell).min_by_key(|(i, r)| (r.2 - r.1, *i))
        else {
            break;
        };
        let (_, start, end) = runs[ri];
        let mean_resp = |cluster: usize| -> f64 {
            responsibilities[start..end].iter().map(|r| r[cluster]).sum::<f64>() / (end - start) as f64
        };
        let target = match (ri.checked_sub(1).map(|j| runs[j].0), runs.get(ri + 1).map(|r| r.0)) {
            (Some(l), Some(r)) => {
                if mean_resp(r) > mean_resp(l) {
                    r
                } else {
                    l
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!("more than one run"),
        };
        runs[ri].0 = target;
        coalesce(&mut runs);
    }
    let mut out = vec![0; clusters.len()];
    for (c, s, e) in runs {
        out[s..e].iter_mut().for_each(|v| *v = c);
    }
    out
}

/// Per-sample argmax clusters, dwell-filtered, with their change points.
pub fn assign(model: &GmmModel, traj: &Trajectory, min_dwell: usize) -> SegmentLabeling {
    let responsibilities: Vec<Vec<f64>> =
        traj.samples().iter().map(|s| model.responsibilities(&s.features())).collect();
    let raw: Vec<usize> = responsibilities
        .iter()
        .map(|r| {
            let mut best = 0;
            for (c, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    let clusters = dwell_filter(&raw, &responsibilities, min_dwell);
    let transitions = runs_of(&clusters).iter().skip(1).map(|r| Transition { index: r.1, imputed: false }).collect();
    SegmentLabeling { clusters, responsibilities, transitions }
}

/// Keeps, per reference fraction, the closest detected transition within
/// tolerance and imputes one at the reference position otherwise. Matching
/// is one-to-one and order preserving; among feasible assignments the total
/// fractional distance is minimized, with an imputation costing the
/// tolerance.
pub fn prune_transitions(labeling: &SegmentLabeling, refs: &ReferenceTransitions, n_total: usize) -> SegmentLabeling {
    let n = n_total.max(1) as f64;
    let detections: Vec<usize> = labeling.transitions.iter().filter(|t| !t.imputed).map(|t| t.index).collect();
    // Candidate options per reference: (index, imputed, cost).
    let options: Vec<Vec<(usize, bool, f64)>> = refs
        .fractions
        .iter()
        .map(|&f| {
            let mut opts: Vec<(usize, bool, f64)> = detections
                .iter()
                .map(|&d| (d, false, (d as f64 / n - f).abs()))
                .filter(|o| o.2 <= refs.tolerance)
                .collect();
            opts.push(((f * n).round() as usize, true, refs.tolerance + 1e-12));
            opts
        })
        .collect();

    // dp[j][o]: best cost for refs 0..=j with ref j taking option o.
    let mut dp: Vec<Vec<(f64, usize)>> = Vec::with_capacity(options.len());
    for (j, opts) in options.iter().enumerate() {
        let row = opts
            .iter()
            .map(|&(idx, _, cost)| {
                if j == 0 {
                    return (cost, usize::MAX);
                }
                let mut best = (f64::INFINITY, usize::MAX);
                for (p, &(pidx, _, _)) in options[j - 1].iter().enumerate() {
                    if pidx < idx && dp[j - 1][p].0 + cost < best.0 {
                        best = (dp[j - 1][p].0 + cost, p);
                    }
                }
                best
            })
            .collect();
        dp.push(row);
    }

    let mut chosen: Vec<Transition> = Vec::with_capacity(options.len());
    if let Some(last) = dp.last() {
        let (mut o, &(cost, _)) = last
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap().then(a.0.cmp(&b.0)))
            .expect("non-empty options");
        if cost.is_finite() {
            for j in (0..options.len()).rev() {
                let (idx, imputed, _) = options[j][o];
                chosen.push(Transition { index: idx, imputed });
                o = dp[j][o].1;
            }
            chosen.reverse();
        } else {
            chosen = options
                .iter()
                .map(|o| {
                    let last = o[o.len() - 1];
                    Transition { index: last.0, imputed: true }
                })
                .collect();
        }
    }
    // Degenerate tiny timelines: force strict increase.
    for j in 1..chosen.len() {
        if chosen[j].index <= chosen[j - 1].index {
            chosen[j].index = chosen[j - 1].index + 1;
            chosen[j].imputed = true;
        }
    }
    SegmentLabeling { transitions: chosen, ..labeling.clone() }
}

/// Assigns the seven runs between six transitions to subtasks 0..=6.
pub fn map_to_subtasks(labeling: &SegmentLabeling) -> Result<Vec<SubtaskId>> {
    labels_from_transitions(&labeling.transition_indices(), labeling.len())
}

pub fn labels_from_transitions(transitions: &[usize], n: usize) -> Result<Vec<SubtaskId>> {
    if transitions.len() != SubtaskId::COUNT - 1 {
        return Err(Error::Mapping(transitions.len()));
    }
    let mut labels = Vec::with_capacity(n);
    let mut current = 0usize;
    for i in 0..n {
        while current < transitions.len() && i >= transitions[current] {
            current += 1;
        }
        labels.push(SubtaskId::ALL[current]);
    }
    Ok(labels)
}
