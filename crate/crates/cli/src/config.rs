//! Versioned pipeline configuration.

use serde::{Deserialize, Serialize};

use ctxmon_core::eval::DEFAULT_REACTION_WINDOW_S;
use ctxmon_core::fault::CampaignSpec;
use ctxmon_core::monitor::{DEFAULT_DEBOUNCE, DEFAULT_DWELL};
use ctxmon_core::segmentation::{ReferenceTransitions, DEFAULT_MIN_DWELL};
use ctxmon_core::sim::{CameraGeometry, ScenarioConfig};
use ctxmon_core::vision::{
    Detector, SsimParams, DEFAULT_BLOCK_THRESHOLD, DEFAULT_DTW_THRESHOLD_PX, DEFAULT_SSIM_THRESHOLD,
};

use crate::error::CliError;

pub const PIPELINE_CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextSource {
    Predicted,
    Oracle,
}

impl ContextSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextSource::Predicted => "predicted",
            ContextSource::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub n_trajectories: usize,
    /// Trajectories are spread round-robin over this many seed streams.
    pub n_subjects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationConfig {
    pub k: usize,
    pub min_dwell: usize,
    pub tolerance: f64,
    /// Every `feature_stride`-th sample enters the mixture fit.
    pub feature_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSettings {
    pub margins: Vec<f64>,
    pub debounce: usize,
    pub dwell: usize,
    pub contexts: Vec<ContextSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub geometry: CameraGeometry,
    pub ssim: SsimParams,
    pub ssim_threshold: f64,
    pub dtw_threshold_px: f64,
    pub block_threshold: u8,
    /// Which detector's events define a failure for scoring.
    pub ground_truth: Detector,
    /// Also write rendered frames as PGM files.
    pub write_frames: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub reaction_window_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub training: TrainingConfig,
    pub segmentation: SegmentationConfig,
    pub monitor: MonitorSettings,
    pub campaigns: Vec<CampaignSpec>,
    pub oracle: OracleConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: PIPELINE_CONFIG_VERSION,
            seed: 0,
            scenario: ScenarioConfig::default(),
            training: TrainingConfig { n_trajectories: 10, n_subjects: 5 },
            segmentation: SegmentationConfig {
                k: 7,
                min_dwell: DEFAULT_MIN_DWELL,
                tolerance: ReferenceTransitions::DEFAULT_TOLERANCE,
                feature_stride: 10,
            },
            monitor: MonitorSettings {
                margins: vec![0.0, 1.0],
                debounce: DEFAULT_DEBOUNCE,
                dwell: DEFAULT_DWELL,
                contexts: vec![ContextSource::Predicted, ContextSource::Oracle],
            },
            campaigns: vec![CampaignSpec::sudden_jump(20, 1), CampaignSpec::block_drop(20, 2)],
            oracle: OracleConfig {
                geometry: CameraGeometry::default(),
                ssim: SsimParams::default(),
                ssim_threshold: DEFAULT_SSIM_THRESHOLD,
                dtw_threshold_px: DEFAULT_DTW_THRESHOLD_PX,
                block_threshold: DEFAULT_BLOCK_THRESHOLD,
                ground_truth: Detector::Physics,
                write_frames: false,
            },
            evaluation: EvaluationConfig { reaction_window_s: DEFAULT_REACTION_WINDOW_S },
        }
    }
}

impl PipelineConfig {
    pub fn from_json(bytes: &[u8], source: &str) -> Result<Self, CliError> {
        let cfg: PipelineConfig =
            serde_json::from_slice(bytes).map_err(|e| CliError::validation(format!("{source}: {e}")))?;
        if cfg.version != PIPELINE_CONFIG_VERSION {
            return Err(CliError::validation(format!("{source}: field `version`: unsupported value {}", cfg.version)));
        }
        cfg.validate().map_err(|e| CliError::validation(format!("{source}: {}", e.message)))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("config serializes");
        v.push(b'\n');
        v
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: String| Err(CliError::validation(format!("field `{field}`: {why}")));
        self.scenario.validate().map_err(|e| CliError::validation(format!("field `scenario`: {e}")))?;
        if self.training.n_trajectories == 0 || self.training.n_subjects == 0 {
            return bad("training", "trajectory and subject counts must be at least 1".into());
        }
        let s = &self.segmentation;
        if s.k == 0 || s.min_dwell == 0 || s.feature_stride == 0 {
            return bad("segmentation", "k, min_dwell and feature_stride must be at least 1".into());
        }
        if !(s.tolerance > 0.0 && s.tolerance < 1.0) {
            return bad("segmentation.tolerance", format!("{} outside (0, 1)", s.tolerance));
        }
        let m = &self.monitor;
        if m.debounce == 0 || m.dwell == 0 {
            return bad("monitor", "debounce and dwell must be at least 1".into());
        }
        if m.margins.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("monitor.margins", "margins must be finite and non-negative".into());
        }
        if m.contexts.is_empty() {
            return bad("monitor.contexts", "at least one context source is required".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, c) in self.campaigns.iter().enumerate() {
            c.validate().map_err(|e| CliError::validation(format!("field `campaigns[{i}]`: {e}")))?;
            if !names.insert(c.name.clone()) || c.name.is_empty() || c.name.contains(['/', '\\']) {
                return bad(
                    &format!("campaigns[{i}].name"),
                    format!("`{}` is empty, duplicated or not a plain name", c.name),
                );
            }
        }
        let o = &self.oracle;
        o.ssim
            .validate(o.geometry.width, o.geometry.height)
            .map_err(|e| CliError::validation(format!("field `oracle.ssim`: {e}")))?;
        if !(o.ssim_threshold > 0.0 && o.ssim_threshold <= 1.0) {
            return bad("oracle.ssim_threshold", format!("{} outside (0, 1]", o.ssim_threshold));
        }
        if !(o.dtw_threshold_px.is_finite() && o.dtw_threshold_px > 0.0) {
            return bad("oracle.dtw_threshold_px", "must be positive".into());
        }
        if !(self.evaluation.reaction_window_s.is_finite() && self.evaluation.reaction_window_s > 0.0) {
            return bad("evaluation.reaction_window_s", "must be positive".into());
        }
        Ok(())
    }

    /// Scenario seed of training trajectory `i`.
    pub fn training_seed(&self, i: usize) -> u64 {
        let subject = i % self.training.n_subjects;
        let take = i / self.training.n_subjects;
        derive_seed(self.seed, 1 + subject as u64, take as u64)
    }

    /// Scenario seed of the fault-free base run of a campaign trial.
    pub fn trial_seed(&self, campaign: usize, trial: usize) -> u64 {
        derive_seed(self.seed, 1_000 + campaign as u64, trial as u64)
    }

    pub fn gmm_seed(&self) -> u64 {
        derive_seed(self.seed, 0, 0)
    }
}

/// Stream-splitting seed derivation (SplitMix64 finalizer).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_and_validates() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(PipelineConfig::from_json(&c.to_json(), "c.json").unwrap(), c);
    }

    #[test]
    fn wrong_version_and_unknown_field_rejected() {
        let mut v: serde_json::Value = serde_json::from_slice(&PipelineConfig::default().to_json()).unwrap();
        v["version"] = 7.into();
        let e = PipelineConfig::from_json(v.to_string().as_bytes(), "c.json").unwrap_err();
        assert!(e.message.contains("version") && e.message.contains("c.json"));
        let mut v: serde_json::Value = serde_json::from_slice(&PipelineConfig::default().to_json()).unwrap();
        v["extra"] = 1.into();
        assert!(PipelineConfig::from_json(v.to_string().as_bytes(), "c.json").is_err());
    }

    #[test]
    fn invalid_field_is_named() {
        let mut c = PipelineConfig::default();
        c.monitor.debounce = 0;
        assert!(c.validate().unwrap_err().message.contains("monitor"));
        let mut c = PipelineConfig::default();
        c.campaigns[1].name = c.campaigns[0].name.clone();
        assert!(c.validate().unwrap_err().message.contains("campaigns[1].name"));
    }

    #[test]
    fn seeds_are_distinct() {
        let c = PipelineConfig::default();
        let mut s: Vec<u64> = (0..10).map(|i| c.training_seed(i)).collect();
        s.extend((0..20).map(|t| c.trial_seed(0, t)));
        s.extend((0..20).map(|t| c.trial_seed(1, t)));
        let n = s.len();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), n);
    }
}
