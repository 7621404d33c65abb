//! The pipeline configuration document: a strict-schema JSON file whose
//! defaults carry the shipped per-organ scale and post-processing tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ftu_pipeline::color::ColorJitterParams;
use ftu_pipeline::infer::ReferencePredictor;
use ftu_pipeline::post::OrganPostConfig;
use ftu_pipeline::scale::OrganScaleConfig;

use crate::errors::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub scale: OrganScaleConfig,
    pub post: OrganPostConfig,
    pub color: ColorConfig,
    pub augment: AugmentConfig,
    pub inference: InferenceConfig,
    pub io: IoConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            scale: OrganScaleConfig::default(),
            post: OrganPostConfig::default(),
            color: ColorConfig::default(),
            augment: AugmentConfig::default(),
            inference: InferenceConfig::default(),
            io: IoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColorConfig {
    /// Directory of reference PNGs for histogram matching; disabled if unset.
    pub reference_dir: Option<PathBuf>,
    /// Probability of matching a sample against a random reference.
    pub match_probability: f64,
    pub jitter: ColorJitterParams,
}

impl Default for ColorConfig {
    fn default() -> Self {
        Self {
            reference_dir: None,
            match_probability: 0.5,
            jitter: ColorJitterParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub tile_size: usize,
    /// Probability of centering a crop on a foreground pixel.
    pub p_nonempty: f64,
    pub cutmix_probability: f64,
    /// Share of epoch draws served from the pseudo-label pools.
    pub pseudo_fraction: f64,
    /// Sample ids removed from the training pipeline.
    pub exclusions: Vec<String>,
    pub scale_range: (f64, f64),
    pub shift_range: (f64, f64),
    pub rotate_range: (f64, f64),
    pub elastic_alpha: f64,
    pub elastic_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            tile_size: 512,
            p_nonempty: 0.5,
            cutmix_probability: 0.5,
            pseudo_fraction: 0.3,
            exclusions: Vec::new(),
            scale_range: (0.9, 1.1),
            shift_range: (-0.0625, 0.0625),
            rotate_range: (-45.0, 45.0),
            elastic_alpha: 30.0,
            elastic_sigma: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub window: usize,
    pub overlap: f64,
    /// Average predictions over the original image and its three flips.
    pub tta: bool,
    pub members: Vec<MemberConfig>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            window: 1024,
            overlap: 0.75,
            tta: true,
            members: vec![MemberConfig {
                predictor: PredictorSpec::Reference("channel-identity".into()),
                weight: 1.0,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberConfig {
    pub predictor: PredictorSpec,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

/// A reference predictor name like `constant:0.6`, or an external command
/// speaking the subprocess protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictorSpec {
    Reference(String),
    External {
        command: Vec<String>,
    },
}

impl PredictorSpec {
    pub fn describe(&self) -> String {
        match self {
            PredictorSpec::Reference(name) => name.clone(),
            PredictorSpec::External { command } => command.join(" "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub write_probmaps: bool,
    pub probmap_dir: String,
    pub mask_dir: String,
    pub image_dir: String,
    pub submission_file: String,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            write_probmaps: true,
            probmap_dir: "probmaps".into(),
            mask_dir: "masks".into(),
            image_dir: "images".into(),
            submission_file: "submission.csv".into(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<Self> {
        self.scale.validate().map_err(CliError::config)?;
        self.post.validate().map_err(CliError::config)?;
        self.color.jitter.validate().map_err(CliError::config)?;
        if !(0.0..=1.0).contains(&self.color.match_probability) {
            return Err(CliError::config(format!(
                "color.match_probability must be in [0, 1], got {}",
                self.color.match_probability
            )));
        }
        let a = &self.augment;
        if a.tile_size == 0 {
            return Err(CliError::config("augment.tile_size must be >= 1"));
        }
        for (name, p) in [
            ("augment.p_nonempty", a.p_nonempty),
            ("augment.cutmix_probability", a.cutmix_probability),
            ("augment.pseudo_fraction", a.pseudo_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CliError::config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        for (name, (lo, hi), identity) in [
            ("augment.scale_range", a.scale_range, 1.0),
            ("augment.shift_range", a.shift_range, 0.0),
            ("augment.rotate_range", a.rotate_range, 0.0),
        ] {
            if !(lo <= identity && identity <= hi) {
                return Err(CliError::config(format!(
                    "{name} [{lo}, {hi}] must contain {identity}"
                )));
            }
        }
        if a.scale_range.0 <= 0.0 {
            return Err(CliError::config("augment.scale_range must be positive"));
        }
        if a.elastic_alpha < 0.0 || !(a.elastic_sigma > 0.0) {
            return Err(CliError::config(
                "augment elastic parameters require alpha >= 0 and sigma > 0",
            ));
        }
        let inf = &self.inference;
        if inf.window == 0 {
            return Err(CliError::config("inference.window must be >= 1"));
        }
        if !(0.0..1.0).contains(&inf.overlap) {
            return Err(CliError::config(format!(
                "inference.overlap must be in [0, 1), got {}",
                inf.overlap
            )));
        }
        let mut weight_sum = 0.0;
        for (i, member) in inf.members.iter().enumerate() {
            if member.weight < 0.0 {
                return Err(CliError::config(format!(
                    "inference.members[{i}].weight must be >= 0"
                )));
            }
            weight_sum += member.weight;
            if let PredictorSpec::Reference(name) = &member.predictor {
                ReferencePredictor::parse(name).map_err(CliError::config)?;
            }
            if let PredictorSpec::External { command } = &member.predictor {
                if command.is_empty() {
                    return Err(CliError::config(format!(
                        "inference.members[{i}].command must not be empty"
                    )));
                }
            }
        }
        if !inf.members.is_empty() && !(weight_sum > 0.0) {
            return Err(CliError::config("ensemble weights must sum to a positive value"));
        }
        Ok(self.clone())
    }
}
