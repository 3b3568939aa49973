use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::periphery::HearingLossLevel;
use crate::pipeline::PipelineSettings;
use crate::predictor::vit::{TrainConfig, VitConfig};
use crate::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    #[default]
    Logistic,
    Vit,
}

impl PredictorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictorKind::Logistic => "logistic",
            PredictorKind::Vit => "vit",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// Model checkpoint for the transformer predictor.
    pub checkpoint: Option<PathBuf>,
    /// JSON file with fitted logistic parameters.
    pub logistic_params: Option<PathBuf>,
}

/// Everything a run needs besides the manifest. Relative paths resolve
/// against the directory holding the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Forces one severity level for every record.
    pub severity_override: Option<HearingLossLevel>,
    pub pipeline: PipelineSettings,
    pub predictor: PredictorConfig,
    pub vit: VitConfig,
    pub train: TrainConfig,
    pub output_dir: Option<PathBuf>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p.as_mut() {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        resolve(base, &mut cfg.predictor.checkpoint);
        resolve(base, &mut cfg.predictor.logistic_params);
        resolve(base, &mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.vit.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(PipelineConfig::from_json_str("{}").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn partial_and_invalid() {
        let c = PipelineConfig::from_json_str(
            r#"{"severity_override": "moderate", "predictor": {"kind": "vit"}, "train": {"epochs": 3}}"#,
        )
        .unwrap();
        assert_eq!(c.severity_override, Some(HearingLossLevel::ModerateLoss));
        assert_eq!(c.predictor.kind, PredictorKind::Vit);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 16);
        assert!(PipelineConfig::from_json_str(r#"{"unknown": 1}"#).is_err());
        assert!(PipelineConfig::from_json_str(r#"{"vit": {"heads": 5}}"#).is_err());
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"predictor": {"checkpoint": "m.msck"}}"#).unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.predictor.checkpoint.unwrap(), dir.path().join("m.msck"));
    }
}
