//! Scoring of segmentation and monitoring runs, and report rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::monitor::Alert;
use crate::trajectory::{SubtaskId, NANOS_PER_SEC};

pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_REACTION_WINDOW_S: f64 = 30.0;

/// Lowercase hex SHA-256.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jaccard {
    pub mean: f64,
    /// `None` for subtasks absent from both sequences.
    pub per_subtask: Vec<Option<f64>>,
}

pub fn jaccard_similarity(pred: &[SubtaskId], gt: &[SubtaskId]) -> Result<Jaccard> {
    if pred.len() != gt.len() {
        return Err(Error::Input(format!("{} predicted labels for {} ground-truth labels", pred.len(), gt.len())));
    }
    let mut inter = [0usize; SubtaskId::COUNT];
    let mut union = [0usize; SubtaskId::COUNT];
    let mut in_gt = [false; SubtaskId::COUNT];
    for (&p, &g) in pred.iter().zip(gt) {
        in_gt[g.index()] = true;
        if p == g {
            inter[p.index()] += 1;
            union[p.index()] += 1;
        } else {
            union[p.index()] += 1;
            union[g.index()] += 1;
        }
    }
    let per_subtask: Vec<Option<f64>> =
        (0..SubtaskId::COUNT).map(|s| (union[s] > 0).then(|| inter[s] as f64 / union[s] as f64)).collect();
    let present: Vec<f64> = (0..SubtaskId::COUNT).filter(|&s| in_gt[s]).filter_map(|s| per_subtask[s]).collect();
    let mean = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
    Ok(Jaccard { mean, per_subtask })
}

/// Signed frame offsets of positionally matched transitions, truncated
/// toward zero. Entry `k` is the transition that ends subtask `k`.
pub fn transition_jitter(pred: &[usize], gt: &[usize], samples_per_frame: f64) -> Result<Vec<i64>> {
    if pred.len() != gt.len() {
        return Err(Error::Input(format!(
            "{} predicted transitions for {} ground-truth transitions",
            pred.len(),
            gt.len()
        )));
    }
    if !(samples_per_frame.is_finite() && samples_per_frame > 0.0) {
        return Err(Error::Input(format!("samples per frame {samples_per_frame} must be positive")));
    }
    Ok(pred.iter().zip(gt).map(|(&p, &g)| ((p as f64 - g as f64) / samples_per_frame).trunc() as i64).collect())
}

/// Mean per-subtask jitter across trajectories. The row for the last
/// subtask stands for the trajectory end and is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterTable {
    pub mean_frames: Vec<f64>,
    pub min_frames: Vec<i64>,
    pub max_frames: Vec<i64>,
    pub trajectories: usize,
}

impl JitterTable {
    pub fn from_runs(runs: &[Vec<i64>]) -> Result<Self> {
        let k = SubtaskId::COUNT - 1;
        if let Some(r) = runs.iter().find(|r| r.len() != k) {
            return Err(Error::Input(format!("jitter run has {} entries, expected {k}", r.len())));
        }
        let mut mean_frames = vec![0.0; SubtaskId::COUNT];
        let mut min_frames = vec![0; SubtaskId::COUNT];
        let mut max_frames = vec![0; SubtaskId::COUNT];
        if !runs.is_empty() {
            for j in 0..k {
                let col = runs.iter().map(|r| r[j]);
                mean_frames[j] = col.clone().sum::<i64>() as f64 / runs.len() as f64;
                min_frames[j] = col.clone().min().unwrap_or(0);
                max_frames[j] = col.max().unwrap_or(0);
            }
        }
        Ok(Self { mean_frames, min_frames, max_frames, trajectories: runs.len() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Earliest alert time, if any.
    pub first_alert_ns: Option<i64>,
    pub failure_ns: Option<i64>,
    /// Failure time minus earliest alert inside the reaction window.
    pub time_to_react_s: Option<f64>,
    pub class: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    FalseNegative,
    TrueNegative,
}

/// Classifies one trial. A failure counts as predicted when some alert lies
/// strictly before it and no more than `window_s` earlier.
pub fn classify_trial(alerts: &[Alert], failure_ns: Option<i64>, window_s: f64) -> TrialOutcome {
    let first_alert_ns = alerts.iter().map(|a| a.t_ns).min();
    let window_ns = (window_s * NANOS_PER_SEC as f64).round() as i64;
    let (class, time_to_react_s) = match failure_ns {
        Some(f) => {
            let lead = alerts.iter().map(|a| a.t_ns).filter(|&t| t < f && f - t <= window_ns).min();
            match lead {
                Some(t) => (Outcome::TruePositive, Some((f - t) as f64 / NANOS_PER_SEC as f64)),
                None => (Outcome::FalseNegative, None),
            }
        }
        None if first_alert_ns.is_some() => (Outcome::FalsePositive, None),
        None => (Outcome::TrueNegative, None),
    };
    TrialOutcome { first_alert_ns, failure_ns, time_to_react_s, class }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub mean_time_to_react_s: Option<f64>,
}

impl ConfusionTable {
    pub fn n_trials(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn evaluate_campaign(trials: &[(Vec<Alert>, Option<i64>)], window_s: f64) -> ConfusionTable {
    let outcomes: Vec<TrialOutcome> = trials.iter().map(|(a, f)| classify_trial(a, *f, window_s)).collect();
    confusion_from_outcomes(&outcomes)
}

pub fn confusion_from_outcomes(outcomes: &[TrialOutcome]) -> ConfusionTable {
    let mut t = ConfusionTable::default();
    let mut reacts = Vec::new();
    for o in outcomes {
        match o.class {
            Outcome::TruePositive => {
                t.tp += 1;
                reacts.extend(o.time_to_react_s);
            }
            Outcome::FalsePositive => t.fp += 1,
            Outcome::FalseNegative => t.fn_ += 1,
            Outcome::TrueNegative => t.tn += 1,
        }
    }
    if !reacts.is_empty() {
        t.mean_time_to_react_s = Some(reacts.iter().sum::<f64>() / reacts.len() as f64);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub scenario: String,
    pub margin: f64,
    pub context: String,
    pub table: ConfusionTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub version: u32,
    pub jaccard: Jaccard,
    pub jitter: JitterTable,
    pub confusion: Vec<ConfusionRow>,
    pub config_digest: String,
    pub corpus_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x}"))
}

/// Deterministic rendering. Floats use the shortest representation that
/// parses back to the same value.
pub fn render_report(r: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(r)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Markdown => Ok(render_markdown(r)),
    }
}

fn render_markdown(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Evaluation report\n");
    let _ = writeln!(out, "- config digest: `{}`", r.config_digest);
    let _ = writeln!(out, "- corpus digest: `{}`\n", r.corpus_digest);
    let _ = writeln!(out, "## Segmentation\n");
    let _ = writeln!(out, "Mean Jaccard: {}\n", r.jaccard.mean);
    let _ = writeln!(out, "| Subtask | Name | Jaccard | Avg error (frames) | Min | Max |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for s in SubtaskId::ALL {
        let i = s.index();
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            s,
            s.name(),
            opt(r.jaccard.per_subtask.get(i).copied().flatten()),
            r.jitter.mean_frames.get(i).copied().unwrap_or(0.0),
            r.jitter.min_frames.get(i).copied().unwrap_or(0),
            r.jitter.max_frames.get(i).copied().unwrap_or(0),
        );
    }
    let _ = writeln!(out, "\n## Safety violation detection\n");
    let _ = writeln!(out, "| Scenario | Margin (sd) | Context | TP | FP | FN | TN | Mean time to react (s) |");
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|");
    for row in &r.confusion {
        let t = &row.table;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            row.scenario,
            row.margin,
            row.context,
            t.tp,
            t.fp,
            t.fn_,
            t.tn,
            opt(t.mean_time_to_react_s)
        );
    }
    out
}
