//! Stage commands. Each stage reads its inputs from the output directory,
//! checks them against the digests recorded upstream, and writes its own
//! artifacts plus a manifest.

use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ctxmon_core::constraints::ConstraintSet;
use ctxmon_core::eval::{
    digest, evaluate_campaign, jaccard_similarity, render_report, transition_jitter, ConfusionRow, EvalReport, Jaccard,
    JitterTable, ReportFormat, REPORT_VERSION,
};
use ctxmon_core::fault::{CampaignSpec, FaultManifest, ManifestEntry, FAULT_MANIFEST_VERSION};
use ctxmon_core::monitor::{parse_alerts_jsonl, write_alerts_jsonl, Alert};
use ctxmon_core::segmentation::Transition;
use ctxmon_core::sim::{generate_trajectory, FailureRecord, GroundTruthLabels};
use ctxmon_core::trajectory::{write_pgm_dir, SubtaskId, Trajectory};
use ctxmon_core::vision::{write_centroids_csv, write_failures_jsonl, Detector, FailureEvent};

use crate::artifacts::*;
use crate::config::{ContextSource, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::workflow::*;

pub fn scenario_digest(cfg: &PipelineConfig) -> String {
    digest(&serde_json::to_vec(&cfg.scenario).expect("scenario serializes"))
}

pub fn config_digest(cfg: &PipelineConfig) -> String {
    digest(&cfg.to_json())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub index: usize,
    pub seed: u64,
    pub trajectory: String,
    pub trajectory_digest: String,
    pub labels: String,
    pub labels_digest: String,
    pub transitions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub version: u32,
    pub scenario_digest: String,
    pub entries: Vec<CorpusEntry>,
}

pub fn cmd_generate(cfg: &PipelineConfig, layout: &Layout) -> CliResult<String> {
    let runs = generate_training(cfg)?;
    write_file(&layout.config(), &cfg.to_json())?;
    let dir = layout.corpus_dir();
    let mut entries = Vec::with_capacity(runs.len());
    for (i, r) in runs.iter().enumerate() {
        let trajectory = format!("train_{i:03}.csv");
        let labels = format!("train_{i:03}.labels.csv");
        let trajectory_digest = write_file(&dir.join(&trajectory), &trajectory_bytes(&r.trajectory)?)?;
        let labels_digest = write_file(&dir.join(&labels), &labels_bytes(&r.labels.labels)?)?;
        entries.push(CorpusEntry {
            index: i,
            seed: r.seed,
            trajectory,
            trajectory_digest,
            labels,
            labels_digest,
            transitions: r.labels.transition_indices.clone(),
        });
    }
    let m = CorpusManifest { version: ARTIFACT_VERSION, scenario_digest: scenario_digest(cfg), entries };
    let d = write_json(&layout.corpus_manifest(), &m)?;
    info!("generated {} training trajectories", runs.len());
    Ok(d)
}

pub struct Corpus {
    pub manifest: CorpusManifest,
    pub digest: String,
    pub runs: Vec<TrainingRun>,
}

pub fn load_corpus(cfg: &PipelineConfig, layout: &Layout) -> CliResult<Corpus> {
    let path = layout.corpus_manifest();
    let (manifest, d): (CorpusManifest, String) = read_json(&path)?;
    require_match("corpus scenario", &manifest.scenario_digest, &scenario_digest(cfg))?;
    let dir = layout.corpus_dir();
    let runs = manifest
        .entries
        .par_iter()
        .map(|e| {
            let trajectory = read_trajectory(&dir.join(&e.trajectory), &e.trajectory_digest)?;
            let labels = read_labels(&dir.join(&e.labels), &e.labels_digest)?;
            if labels.len() != trajectory.len() {
                return Err(CliError::input(&dir.join(&e.labels), "label count differs from trajectory length"));
            }
            Ok(TrainingRun { seed: e.seed, trajectory, labels: GroundTruthLabels::from_labels(labels) })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Corpus { manifest, digest: d, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub index: usize,
    pub transitions: Vec<Transition>,
    pub labels: String,
    pub labels_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationArtifact {
    pub version: u32,
    pub corpus_digest: String,
    pub model: SegmentationModel,
    pub predictions: Vec<PredictionEntry>,
}

pub fn cmd_segment(cfg: &PipelineConfig, layout: &Layout) -> CliResult<String> {
    let corpus = load_corpus(cfg, layout)?;
    let inputs: Vec<(&Trajectory, &[usize])> =
        corpus.runs.iter().map(|r| (&r.trajectory, r.labels.transition_indices.as_slice())).collect();
    let (model, preds) = segment_corpus(cfg, &inputs)?;
    let dir = layout.model_dir();
    let mut predictions = Vec::with_capacity(preds.len());
    for (i, p) in preds.iter().enumerate() {
        let labels = format!("pred_{i:03}.labels.csv");
        let labels_digest = write_file(&dir.join(&labels), &labels_bytes(&p.labels)?)?;
        predictions.push(PredictionEntry { index: i, transitions: p.transitions.clone(), labels, labels_digest });
    }
    info!("mixture fit converged after {} iterations", model.iterations);
    let art = SegmentationArtifact { version: ARTIFACT_VERSION, corpus_digest: corpus.digest, model, predictions };
    write_json(&layout.segmentation(), &art)
}

fn load_segmentation(layout: &Layout, corpus_digest: &str) -> CliResult<(SegmentationArtifact, String)> {
    let (art, d): (SegmentationArtifact, String) = read_json(&layout.segmentation())?;
    require_match("segmentation corpus", &art.corpus_digest, corpus_digest)?;
    Ok((art, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnManifest {
    pub version: u32,
    pub corpus_digest: String,
    pub segmentation_digest: String,
    pub predicted_digest: String,
    pub oracle_digest: String,
}

impl LearnManifest {
    fn digest_for(&self, source: ContextSource) -> &str {
        match source {
            ContextSource::Predicted => &self.predicted_digest,
            ContextSource::Oracle => &self.oracle_digest,
        }
    }
}

pub fn cmd_learn(cfg: &PipelineConfig, layout: &Layout) -> CliResult<String> {
    let corpus = load_corpus(cfg, layout)?;
    let (seg, seg_digest) = load_segmentation(layout, &corpus.digest)?;
    let provenance = corpus
        .manifest
        .entries
        .iter()
        .map(|e| format!("corpus/{} sha256:{}", e.trajectory, e.trajectory_digest))
        .collect();
    let learned = learn_constraints(cfg, &corpus.runs, &seg.model.context, provenance)?;
    let predicted_digest = write_file(&layout.constraints("predicted"), &learned.predicted.to_json()?)?;
    let oracle_digest = write_file(&layout.constraints("oracle"), &learned.oracle.to_json()?)?;
    let md = format!(
        "# Learned constraints\n\n## Predicted context\n\n{}\n## Oracle context\n\n{}",
        learned.predicted.to_markdown(),
        learned.oracle.to_markdown()
    );
    write_file(&layout.model_dir().join("constraints.md"), md.as_bytes())?;
    let m = LearnManifest {
        version: ARTIFACT_VERSION,
        corpus_digest: corpus.digest,
        segmentation_digest: seg_digest,
        predicted_digest,
        oracle_digest,
    };
    write_json(&layout.learn_manifest(), &m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFiles {
    pub trial: usize,
    pub trajectory: String,
    pub trajectory_digest: String,
    pub labels: String,
    pub labels_digest: String,
}

/// Sidecar of a fault manifest: where each faulty run lives on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignIndex {
    pub version: u32,
    pub scenario_digest: String,
    pub fault_manifest_digest: String,
    pub trials: Vec<TrialFiles>,
}

pub fn cmd_inject(cfg: &PipelineConfig, layout: &Layout) -> CliResult<()> {
    for (ci, cs) in cfg.campaigns.iter().enumerate() {
        let trials =
            (0..cs.n_trials).into_par_iter().map(|t| build_trial(cfg, ci, t)).collect::<CliResult<Vec<_>>>()?;
        let dir = layout.campaign_dir(&cs.name);
        let mut entries = Vec::with_capacity(trials.len());
        let mut files = Vec::with_capacity(trials.len());
        for ti in &trials {
            let (s, e) = ti.spec.window(ti.faulty.len())?;
            entries.push(ManifestEntry { trial: ti.trial, base_seed: ti.base_seed, spec: ti.spec, window: [s, e] });
            let stem = trial_stem(ti.trial);
            let trajectory = format!("{stem}.csv");
            let labels = format!("{stem}.labels.csv");
            let trajectory_digest = write_file(&dir.join(&trajectory), &trajectory_bytes(&ti.faulty)?)?;
            let labels_digest = write_file(&dir.join(&labels), &labels_bytes(&ti.labels.labels)?)?;
            files.push(TrialFiles { trial: ti.trial, trajectory, trajectory_digest, labels, labels_digest });
        }
        let fm = FaultManifest { version: FAULT_MANIFEST_VERSION, campaign: cs.clone(), trials: entries };
        let fault_manifest_digest = write_json(&layout.fault_manifest(&cs.name), &fm)?;
        let index = CampaignIndex {
            version: ARTIFACT_VERSION,
            scenario_digest: scenario_digest(cfg),
            fault_manifest_digest,
            trials: files,
        };
        write_json(&dir.join("index.json"), &index)?;
        info!("campaign {}: {} trials injected", cs.name, trials.len());
    }
    Ok(())
}

pub struct LoadedTrial {
    pub entry: ManifestEntry,
    pub faulty: Trajectory,
    pub labels: Vec<SubtaskId>,
}

pub struct Campaign {
    pub manifest: FaultManifest,
    pub digest: String,
    pub trials: Vec<LoadedTrial>,
}

pub fn load_campaign(cfg: &PipelineConfig, layout: &Layout, cs: &CampaignSpec) -> CliResult<Campaign> {
    let (index, _): (CampaignIndex, String) = read_json(&layout.campaign_dir(&cs.name).join("index.json"))?;
    require_match(&format!("campaign {} scenario", cs.name), &index.scenario_digest, &scenario_digest(cfg))?;
    let fm_path = layout.fault_manifest(&cs.name);
    let (manifest, d): (FaultManifest, String) = read_json(&fm_path)?;
    require_match(&format!("campaign {} fault manifest", cs.name), &index.fault_manifest_digest, &d)?;
    if manifest.version != FAULT_MANIFEST_VERSION {
        return Err(CliError::input(&fm_path, format!("unsupported version {}", manifest.version)));
    }
    if manifest.campaign != *cs || manifest.trials.len() != index.trials.len() {
        return Err(CliError::input(&fm_path, "campaign differs from the configured one"));
    }
    let dir = layout.campaign_dir(&cs.name);
    let trials = manifest
        .trials
        .par_iter()
        .zip(&index.trials)
        .map(|(entry, f)| {
            let faulty = read_trajectory(&dir.join(&f.trajectory), &f.trajectory_digest)?;
            let labels = read_labels(&dir.join(&f.labels), &f.labels_digest)?;
            if labels.len() != faulty.len() || f.trial != entry.trial {
                return Err(CliError::input(&dir.join(&f.labels), "does not match its trajectory"));
            }
            Ok(LoadedTrial { entry: entry.clone(), faulty, labels })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Campaign { manifest, digest: d, trials })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorTrial {
    pub trial: usize,
    pub alerts: String,
    pub alerts_digest: String,
    pub n_alerts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorManifest {
    pub version: u32,
    pub campaign: String,
    pub context: ContextSource,
    pub margin: f64,
    pub debounce: usize,
    pub fault_manifest_digest: String,
    pub constraints_digest: String,
    pub trials: Vec<MonitorTrial>,
}

struct LearnedModel {
    learned: LearnedConstraints,
    manifest: LearnManifest,
    segmentation: SegmentationArtifact,
}

fn load_learned(layout: &Layout) -> CliResult<LearnedModel> {
    let (manifest, _): (LearnManifest, String) = read_json(&layout.learn_manifest())?;
    let (segmentation, seg_digest) = read_json::<SegmentationArtifact>(&layout.segmentation())?;
    require_match("constraint segmentation", &manifest.segmentation_digest, &seg_digest)?;
    let load = |source: ContextSource| -> CliResult<ConstraintSet> {
        let path = layout.constraints(source.as_str());
        let bytes = read_checked(&path, manifest.digest_for(source))?;
        ConstraintSet::from_json(&bytes).map_err(|e| CliError::input(&path, e))
    };
    let learned =
        LearnedConstraints { predicted: load(ContextSource::Predicted)?, oracle: load(ContextSource::Oracle)? };
    Ok(LearnedModel { learned, manifest, segmentation })
}

pub fn cmd_monitor(cfg: &PipelineConfig, layout: &Layout) -> CliResult<()> {
    let lm = load_learned(layout)?;
    let context = &lm.segmentation.model.context;
    for cs in &cfg.campaigns {
        let campaign = load_campaign(cfg, layout, cs)?;
        for &source in &cfg.monitor.contexts {
            let configs: Vec<_> =
                cfg.monitor.margins.iter().map(|&m| monitor_config(cfg, context, &lm.learned, source, m)).collect();
            let runs = campaign
                .trials
                .par_iter()
                .map(|t| configs.iter().map(|mc| monitor_trajectory(mc, source, &t.faulty, &t.labels)).collect())
                .collect::<CliResult<Vec<Vec<_>>>>()?;
            let ctx_dir = layout.monitor_dir(&cs.name, source.as_str());
            for (t, per_margin) in campaign.trials.iter().zip(&runs) {
                let name = format!("{}.subtasks.csv", trial_stem(t.entry.trial));
                write_file(&ctx_dir.join(name), &labels_bytes(&per_margin[0].subtask_trace)?)?;
            }
            for (mi, &margin) in cfg.monitor.margins.iter().enumerate() {
                let dir = layout.monitor_run_dir(&cs.name, source.as_str(), margin);
                let mut trials = Vec::with_capacity(runs.len());
                for (t, per_margin) in campaign.trials.iter().zip(&runs) {
                    let alerts = &per_margin[mi].alerts;
                    let mut buf = Vec::new();
                    write_alerts_jsonl(alerts, &mut buf)?;
                    let name = format!("{}.alerts.jsonl", trial_stem(t.entry.trial));
                    let alerts_digest = write_file(&dir.join(&name), &buf)?;
                    trials.push(MonitorTrial {
                        trial: t.entry.trial,
                        alerts: name,
                        alerts_digest,
                        n_alerts: alerts.len(),
                    });
                }
                let m = MonitorManifest {
                    version: ARTIFACT_VERSION,
                    campaign: cs.name.clone(),
                    context: source,
                    margin,
                    debounce: cfg.monitor.debounce,
                    fault_manifest_digest: campaign.digest.clone(),
                    constraints_digest: lm.manifest.digest_for(source).to_string(),
                    trials,
                };
                write_json(&dir.join("manifest.json"), &m)?;
                let n: usize = m.trials.iter().map(|t| t.n_alerts).sum();
                info!("monitor {} {} m{}: {} alerts", cs.name, source.as_str(), margin, n);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTrial {
    pub trial: usize,
    pub physics_failure: Option<FailureRecord>,
    pub physics: Option<FailureEvent>,
    pub ssim: Option<FailureEvent>,
    pub dtw: Option<FailureEvent>,
    /// Failure time under the configured ground truth.
    pub failure_ns: Option<i64>,
    /// Frames whose block or end-effector fell outside the image.
    pub clamped_frames: Vec<usize>,
    pub failures_digest: String,
    pub block_trace_digest: String,
    pub centroids_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleManifest {
    pub version: u32,
    pub campaign: String,
    pub scenario_digest: String,
    pub fault_manifest_digest: String,
    pub ground_truth: Detector,
    pub trials: Vec<OracleTrial>,
}

pub fn cmd_oracle(cfg: &PipelineConfig, layout: &Layout) -> CliResult<()> {
    let gt = cfg.oracle.ground_truth;
    for cs in &cfg.campaigns {
        let campaign = load_campaign(cfg, layout, cs)?;
        let dir = layout.oracle_dir(&cs.name);
        let trials = campaign
            .trials
            .par_iter()
            .map(|t| {
                let (base, base_labels) = generate_trajectory(&cfg.scenario.with_seed(t.entry.base_seed))?;
                if base_labels.labels != t.labels || base.len() != t.faulty.len() {
                    return Err(CliError::validation(format!(
                        "campaign {} trial {}: base run does not match the injected trajectory",
                        cs.name, t.entry.trial
                    )));
                }
                let o = oracle_trial(cfg, &base, &t.faulty, &t.labels, cfg.oracle.write_frames)?;
                let stem = trial_stem(t.entry.trial);
                let mut buf = Vec::new();
                write_failures_jsonl(&o.events(), &mut buf)?;
                let failures_digest = write_file(&dir.join(format!("{stem}.failures.jsonl")), &buf)?;
                let block_trace_digest =
                    write_file(&dir.join(format!("{stem}.block_trace.jsonl")), &o.trace.to_jsonl()?)?;
                let mut buf = Vec::new();
                write_centroids_csv(&o.centroids, &mut buf)?;
                let centroids_digest = write_file(&dir.join(format!("{stem}.centroids.csv")), &buf)?;
                if let Some(frames) = &o.frames {
                    write_pgm_dir(frames, &dir.join(format!("{stem}_frames")))?;
                }
                Ok(OracleTrial {
                    trial: t.entry.trial,
                    physics_failure: o.trace.failure,
                    physics: o.physics,
                    ssim: o.ssim,
                    dtw: o.dtw,
                    failure_ns: o.failure_ns(gt, &t.faulty),
                    clamped_frames: o.clamped_frames.clone(),
                    failures_digest,
                    block_trace_digest,
                    centroids_digest,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let failures = trials.iter().filter(|t| t.failure_ns.is_some()).count();
        let m = OracleManifest {
            version: ARTIFACT_VERSION,
            campaign: cs.name.clone(),
            scenario_digest: scenario_digest(cfg),
            fault_manifest_digest: campaign.digest,
            ground_truth: gt,
            trials,
        };
        write_json(&dir.join("manifest.json"), &m)?;
        info!("oracle {}: {} failures", cs.name, failures);
    }
    Ok(())
}

/// Mean of per-trajectory scores; per-subtask means skip trajectories where
/// the subtask is absent from both labelings.
pub fn aggregate_jaccard(scores: &[Jaccard]) -> Jaccard {
    let n = scores.len().max(1) as f64;
    let mean = scores.iter().map(|j| j.mean).sum::<f64>() / n;
    let per_subtask = (0..SubtaskId::COUNT)
        .map(|i| {
            let v: Vec<f64> = scores.iter().filter_map(|j| j.per_subtask.get(i).copied().flatten()).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    Jaccard { mean, per_subtask }
}

pub fn cmd_evaluate(cfg: &PipelineConfig, layout: &Layout) -> CliResult<EvalReport> {
    let corpus = load_corpus(cfg, layout)?;
    let (seg, _) = load_segmentation(layout, &corpus.digest)?;
    if seg.predictions.len() != corpus.runs.len() {
        return Err(CliError::input(&layout.segmentation(), "prediction count differs from corpus size"));
    }
    let (learn, _): (LearnManifest, String) = read_json(&layout.learn_manifest())?;
    require_match("constraint corpus", &learn.corpus_digest, &corpus.digest)?;
    let spf = cfg.scenario.rate_hz / cfg.scenario.frame_rate_fps;
    let mut scores = Vec::new();
    let mut jitter = Vec::new();
    for (run, p) in corpus.runs.iter().zip(&seg.predictions) {
        let pred = read_labels(&layout.model_dir().join(&p.labels), &p.labels_digest)?;
        scores.push(jaccard_similarity(&pred, &run.labels.labels)?);
        let idx: Vec<usize> = p.transitions.iter().map(|t| t.index).collect();
        jitter.push(transition_jitter(&idx, &run.labels.transition_indices, spf)?);
    }

    let mut confusion = Vec::new();
    for cs in &cfg.campaigns {
        let (fm, fm_digest) = read_json::<FaultManifest>(&layout.fault_manifest(&cs.name))?;
        if fm.campaign != *cs {
            return Err(CliError::input(&layout.fault_manifest(&cs.name), "campaign differs from the configured one"));
        }
        let (oracle, _): (OracleManifest, String) = read_json(&layout.oracle_dir(&cs.name).join("manifest.json"))?;
        require_match(&format!("oracle {}", cs.name), &oracle.fault_manifest_digest, &fm_digest)?;
        require_match(&format!("oracle {} scenario", cs.name), &oracle.scenario_digest, &scenario_digest(cfg))?;
        for &margin in &cfg.monitor.margins {
            for &source in &cfg.monitor.contexts {
                let dir = layout.monitor_run_dir(&cs.name, source.as_str(), margin);
                let (mm, _): (MonitorManifest, String) = read_json(&dir.join("manifest.json"))?;
                let what = format!("monitor {} {} m{}", cs.name, source.as_str(), margin);
                require_match(&what, &mm.fault_manifest_digest, &fm_digest)?;
                require_match(&what, &mm.constraints_digest, learn.digest_for(source))?;
                if mm.trials.len() != oracle.trials.len() {
                    return Err(CliError::validation(format!("{what}: trial count differs from the oracle")));
                }
                let trials = mm
                    .trials
                    .iter()
                    .zip(&oracle.trials)
                    .map(|(t, o)| Ok((read_alerts(&dir.join(&t.alerts), &t.alerts_digest)?, o.failure_ns)))
                    .collect::<CliResult<Vec<_>>>()?;
                let table = evaluate_campaign(&trials, cfg.evaluation.reaction_window_s);
                confusion.push(ConfusionRow {
                    scenario: cs.name.clone(),
                    margin,
                    context: source.as_str().into(),
                    table,
                });
            }
        }
    }
    let report = EvalReport {
        version: REPORT_VERSION,
        jaccard: aggregate_jaccard(&scores),
        jitter: JitterTable::from_runs(&jitter)?,
        confusion,
        config_digest: config_digest(cfg),
        corpus_digest: corpus.digest,
    };
    write_file(&layout.report("json"), render_report(&report, ReportFormat::Json)?.as_bytes())?;
    write_file(&layout.report("md"), render_report(&report, ReportFormat::Markdown)?.as_bytes())?;
    Ok(report)
}

fn read_alerts(path: &Path, expected: &str) -> CliResult<Vec<Alert>> {
    let bytes = read_checked(path, expected)?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::input(path, e))?;
    parse_alerts_jsonl(&text).map_err(|e| CliError::input(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

/// Progress record of a pipeline run, rewritten after every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub version: u32,
    pub config_digest: String,
    pub completed: Vec<String>,
    pub failed: Option<StageFailure>,
}

pub const STAGES: [&str; 7] = ["generate", "segment", "learn", "inject", "monitor", "oracle", "evaluate"];

pub fn cmd_pipeline(cfg: &PipelineConfig, layout: &Layout) -> CliResult<EvalReport> {
    let mut pm = PipelineManifest {
        version: ARTIFACT_VERSION,
        config_digest: config_digest(cfg),
        completed: vec![],
        failed: None,
    };
    let mut report = None;
    for stage in STAGES {
        let r = match stage {
            "generate" => cmd_generate(cfg, layout).map(drop),
            "segment" => cmd_segment(cfg, layout).map(drop),
            "learn" => cmd_learn(cfg, layout).map(drop),
            "inject" => cmd_inject(cfg, layout),
            "monitor" => cmd_monitor(cfg, layout),
            "oracle" => cmd_oracle(cfg, layout),
            _ => cmd_evaluate(cfg, layout).map(|r| report = Some(r)),
        };
        match r {
            Ok(()) => pm.completed.push(stage.into()),
            Err(e) => {
                pm.failed = Some(StageFailure { stage: stage.into(), message: e.message.clone() });
                write_json(&layout.pipeline_manifest(), &pm)?;
                return Err(e);
            }
        }
        write_json(&layout.pipeline_manifest(), &pm)?;
    }
    Ok(report.expect("evaluate ran"))
}
