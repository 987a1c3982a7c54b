//! In-memory pipeline steps. The stage commands wrap these with artifact I/O.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ctxmon_core::constraints::{learn_envelopes, ConstraintSet};
use ctxmon_core::fault::{inject, FaultSpec};
use ctxmon_core::monitor::{
    run_monitor, run_monitor_with_context, track_subtasks, ContextModel, MonitorConfig, MonitorRun,
};
use ctxmon_core::segmentation::{
    assign, fit_gmm, map_to_subtasks, prune_transitions, trajectory_features, Features, GmmModel, ReferenceTransitions,
    Transition,
};
use ctxmon_core::sim::{block_trace, generate_trajectory, render_frames, BlockTrace, GroundTruthLabels};
use ctxmon_core::trajectory::{FrameSequence, SubtaskId, Trajectory};
use ctxmon_core::vision::{
    centroid_trace, detect_failure_dtw, detect_failure_ssim, impute_missing, Detector, FailureEvent,
};

use crate::config::{ContextSource, PipelineConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub labels: GroundTruthLabels,
}

pub fn generate_training(cfg: &PipelineConfig) -> CliResult<Vec<TrainingRun>> {
    (0..cfg.training.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.training_seed(i);
            let (trajectory, labels) = generate_trajectory(&cfg.scenario.with_seed(seed))?;
            Ok(TrainingRun { seed, trajectory, labels })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedSegmentation {
    pub transitions: Vec<Transition>,
    pub labels: Vec<SubtaskId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationModel {
    pub gmm: GmmModel,
    pub iterations: usize,
    pub refs: ReferenceTransitions,
    pub context: ContextModel,
}

/// Fits the mixture on the pooled corpus, segments every trajectory, and
/// builds the class-conditional context model from the predicted labels.
pub fn segment_corpus(
    cfg: &PipelineConfig,
    corpus: &[(&Trajectory, &[usize])],
) -> CliResult<(SegmentationModel, Vec<PredictedSegmentation>)> {
    let sc = &cfg.segmentation;
    let mut pooled = Features::new(4);
    for (t, _) in corpus {
        for row in trajectory_features(t, sc.feature_stride).rows() {
            pooled.push(row)?;
        }
    }
    let fit = fit_gmm(&pooled, sc.k, cfg.gmm_seed())?;
    let refs_input: Vec<(usize, Vec<usize>)> = corpus.iter().map(|(t, tr)| (t.len(), tr.to_vec())).collect();
    let refs = ReferenceTransitions::from_corpus(&refs_input, sc.tolerance)?;
    let predictions: Vec<PredictedSegmentation> = corpus
        .par_iter()
        .map(|(t, _)| {
            let pruned = prune_transitions(&assign(&fit.model, t, sc.min_dwell), &refs, t.len());
            let labels = map_to_subtasks(&pruned)?;
            Ok(PredictedSegmentation { transitions: pruned.transitions, labels })
        })
        .collect::<CliResult<_>>()?;

    let mut all = Features::new(4);
    let mut classes = Vec::new();
    for ((t, _), p) in corpus.iter().zip(&predictions) {
        for (s, l) in t.samples().iter().zip(&p.labels) {
            all.push(&s.features())?;
            classes.push(l.index());
        }
    }
    let class_model = GmmModel::from_labels(&all, &classes, SubtaskId::COUNT, fit.model.variance_floor)?;
    let context = ContextModel::identity(class_model)?;
    Ok((SegmentationModel { gmm: fit.model, iterations: fit.iterations, refs, context }, predictions))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedConstraints {
    /// Learned against the online tracker's subtask estimate.
    pub predicted: ConstraintSet,
    /// Learned against the scripted ground-truth labels.
    pub oracle: ConstraintSet,
}

impl LearnedConstraints {
    pub fn for_source(&self, source: ContextSource) -> &ConstraintSet {
        match source {
            ContextSource::Predicted => &self.predicted,
            ContextSource::Oracle => &self.oracle,
        }
    }
}

pub fn learn_constraints(
    cfg: &PipelineConfig,
    runs: &[TrainingRun],
    context: &ContextModel,
    provenance: Vec<String>,
) -> CliResult<LearnedConstraints> {
    let tracked: Vec<Vec<SubtaskId>> =
        runs.par_iter().map(|r| track_subtasks(&r.trajectory, context, cfg.monitor.dwell)).collect();
    let predicted_corpus: Vec<(&Trajectory, &[SubtaskId])> =
        runs.iter().zip(&tracked).map(|(r, l)| (&r.trajectory, l.as_slice())).collect();
    let oracle_corpus: Vec<(&Trajectory, &[SubtaskId])> =
        runs.iter().map(|r| (&r.trajectory, r.labels.labels.as_slice())).collect();
    Ok(LearnedConstraints {
        predicted: learn_envelopes(&predicted_corpus, provenance.clone())?,
        oracle: learn_envelopes(&oracle_corpus, provenance)?,
    })
}

pub fn monitor_config(
    cfg: &PipelineConfig,
    context: &ContextModel,
    constraints: &LearnedConstraints,
    source: ContextSource,
    margin: f64,
) -> MonitorConfig {
    MonitorConfig {
        context: context.clone(),
        constraints: constraints.for_source(source).clone(),
        margin,
        debounce: cfg.monitor.debounce,
        dwell: cfg.monitor.dwell,
    }
}

pub fn monitor_trajectory(
    mc: &MonitorConfig,
    source: ContextSource,
    traj: &Trajectory,
    labels: &[SubtaskId],
) -> CliResult<MonitorRun> {
    Ok(match source {
        ContextSource::Predicted => run_monitor(traj, mc)?,
        ContextSource::Oracle => run_monitor_with_context(traj, mc, labels)?,
    })
}

#[derive(Debug, Clone)]
pub struct TrialInput {
    pub campaign: usize,
    pub trial: usize,
    pub base_seed: u64,
    pub base: Trajectory,
    pub labels: GroundTruthLabels,
    pub spec: FaultSpec,
    pub faulty: Trajectory,
}

/// Regenerates the fault-free base run of a trial and applies its fault.
pub fn build_trial(cfg: &PipelineConfig, campaign: usize, trial: usize) -> CliResult<TrialInput> {
    let cs = cfg
        .campaigns
        .get(campaign)
        .ok_or_else(|| CliError::validation(format!("no campaign with index {campaign}")))?;
    let base_seed = cfg.trial_seed(campaign, trial);
    let (base, labels) = generate_trajectory(&cfg.scenario.with_seed(base_seed))?;
    let spec = cs.sample_trial(trial, &labels.labels)?;
    let faulty = inject(&base, &spec)?;
    Ok(TrialInput { campaign, trial, base_seed, base, labels, spec, faulty })
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub trace: BlockTrace,
    pub physics: Option<FailureEvent>,
    pub ssim: Option<FailureEvent>,
    pub dtw: Option<FailureEvent>,
    pub centroids: Vec<Option<[f64; 2]>>,
    pub clamped_frames: Vec<usize>,
    pub frames: Option<FrameSequence>,
}

impl OracleOutcome {
    pub fn events(&self) -> Vec<FailureEvent> {
        [self.physics, self.ssim, self.dtw].into_iter().flatten().collect()
    }

    pub fn ground_truth(&self, detector: Detector) -> Option<FailureEvent> {
        match detector {
            Detector::Physics => self.physics,
            Detector::Ssim => self.ssim,
            Detector::Dtw => self.dtw,
        }
    }

    /// Failure time used for scoring. Physics failures are timed at the
    /// kinematic sample, detector events at their frame.
    pub fn failure_ns(&self, detector: Detector, faulty: &Trajectory) -> Option<i64> {
        match detector {
            Detector::Physics => self.trace.failure.map(|f| faulty.samples()[f.sample].t_ns),
            _ => self.ground_truth(detector).map(|e| e.t_ns),
        }
    }
}

/// Physics ground truth plus both vision detectors. The DTW reference is
/// the rendered fault-free base run.
pub fn oracle_trial(
    cfg: &PipelineConfig,
    base: &Trajectory,
    faulty: &Trajectory,
    labels: &[SubtaskId],
    keep_frames: bool,
) -> CliResult<OracleOutcome> {
    let o = &cfg.oracle;
    let trace = block_trace(faulty, labels, &cfg.scenario)?;
    let (frames, clamped_frames) = render_frames(&trace, &cfg.scenario, &o.geometry)?;
    let ssim = detect_failure_ssim(&frames, o.ssim_threshold, &o.ssim)?;
    let centroids = centroid_trace(&frames, o.block_threshold);

    let ref_trace = block_trace(base, labels, &cfg.scenario)?;
    let (ref_frames, _) = render_frames(&ref_trace, &cfg.scenario, &o.geometry)?;
    let (reference, _) = impute_missing(&centroid_trace(&ref_frames, o.block_threshold))?;
    let (observed, _) = impute_missing(&centroids)?;
    let ts: Vec<i64> = frames.frames().iter().map(|f| f.t_ns).collect();
    let dtw = detect_failure_dtw(&observed, &reference, o.dtw_threshold_px, &ts)?;

    Ok(OracleOutcome {
        physics: FailureEvent::from_physics(&trace),
        trace,
        ssim,
        dtw,
        centroids,
        clamped_frames,
        frames: keep_frames.then_some(frames),
    })
}
