//! Run configuration documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptConfig, WeightOptConfig};
use crate::decoder::ExecutionMode;
use crate::error::{Error, Result};
use crate::generator::{Generator, RemoteConfig, RemoteGenerator, ToyModel};
use crate::types::GenerationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Ttaug,
    TtadaptWeights,
    TtadaptParams,
    SelfConsistency,
    SelfSelector,
    SampleAndRank,
    SelfSynthesizer,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Ttaug => "ttaug",
            Method::TtadaptWeights => "ttadapt_weights",
            Method::TtadaptParams => "ttadapt_params",
            Method::SelfConsistency => "self_consistency",
            Method::SelfSelector => "self_selector",
            Method::SampleAndRank => "sample_and_rank",
            Method::SelfSynthesizer => "self_synthesizer",
        }
    }

    /// Methods that pick or merge whole answers.
    pub fn is_answer_level(self) -> bool {
        matches!(
            self,
            Method::SelfConsistency | Method::SelfSelector | Method::SampleAndRank | Method::SelfSynthesizer
        )
    }
}

/// Where answer-level methods get their candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    /// Greedy decoding of each augmented input.
    #[default]
    Augmented,
    /// Temperature sampling of the original input.
    Temperature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Toy { spec_path: PathBuf },
    Remote(RemoteConfig),
}

impl ModelSource {
    /// Opens the model, resolving relative paths against `base`.
    pub fn open(&self, base: &Path) -> Result<Box<dyn Generator>> {
        match self {
            ModelSource::Toy { spec_path } => Ok(Box::new(ToyModel::from_spec_file(&base.join(spec_path))?)),
            ModelSource::Remote(cfg) => {
                let cfg = RemoteConfig {
                    vocab_path: base.join(&cfg.vocab_path),
                    ..cfg.clone()
                };
                Ok(Box::new(RemoteGenerator::connect(&cfg)?))
            }
        }
    }
}

fn default_sample_k() -> usize {
    1000
}

fn default_temperature() -> f64 {
    1.0
}

/// One evaluation run. Relative paths resolve against the directory of the
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapt: Option<AdaptConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_opt: Option<WeightOptConfig>,
    pub dataset_path: PathBuf,
    pub model: ModelSource,
    /// Upper bound on evaluated records; smaller datasets are used whole.
    #[serde(default = "default_sample_k")]
    pub sample_k: usize,
    pub output_dir: PathBuf,
    /// Name written to the aggregate CSV; defaults to the dataset file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    #[serde(default)]
    pub candidates: CandidateSource,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub execution: ExecutionMode,
    /// Resolution base for relative paths; set by [`RunConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        if self.sample_k == 0 {
            return Err(Error::InvalidConfig("sample_k must be >= 1".into()));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        match self.method {
            Method::TtadaptParams => self
                .adapt
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("method ttadapt_params needs an `adapt` section".into()))?
                .validate()?,
            Method::TtadaptWeights => self
                .weight_opt
                .as_ref()
                .ok_or_else(|| {
                    Error::InvalidConfig("method ttadapt_weights needs a `weight_opt` section".into())
                })?
                .validate()?,
            _ => {}
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn benchmark_name(&self) -> String {
        self.benchmark.clone().unwrap_or_else(|| {
            self.dataset_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "method": "ttaug",
        "dataset_path": "data.jsonl",
        "model": {"toy": {"spec_path": "model.json"}},
        "output_dir": "out"
    }"#;

    #[test]
    fn defaults_follow_the_final_recipe() {
        let cfg = RunConfig::from_json(MINIMAL, "/base").unwrap();
        assert_eq!(cfg.generation, GenerationConfig::default());
        assert_eq!(cfg.generation.n_aug, 16);
        assert_eq!(cfg.sample_k, 1000);
        assert_eq!(cfg.temperature, 1.0);
        assert_eq!(cfg.resolve(&cfg.dataset_path), PathBuf::from("/base/data.jsonl"));
        assert_eq!(cfg.benchmark_name(), "data");
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = MINIMAL.replace("\"method\"", "\"colour\": 1, \"method\"");
        assert!(matches!(RunConfig::from_json(&text, "."), Err(Error::InvalidConfig(_))));
        let text = MINIMAL.replace("\"output_dir\": \"out\"", "\"output_dir\": \"out\", \"generation\": {\"n_augs\": 2}");
        assert!(RunConfig::from_json(&text, ".").is_err());
    }

    #[test]
    fn method_sections_required() {
        let text = MINIMAL.replace("\"ttaug\"", "\"ttadapt_params\"");
        assert!(RunConfig::from_json(&text, ".").is_err());
        let text = text.replace("\"output_dir\": \"out\"", "\"output_dir\": \"out\", \"adapt\": {}");
        assert_eq!(RunConfig::from_json(&text, ".").unwrap().adapt, Some(AdaptConfig::default()));
        let text = MINIMAL.replace("\"ttaug\"", "\"ttadapt_weights\"");
        assert!(RunConfig::from_json(&text, ".").is_err());
    }
}
