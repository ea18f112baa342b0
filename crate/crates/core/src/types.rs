//! Domain types shared by every module: distributions, augmented inputs,
//! decoding configuration, traces and benchmark records.

use std::fmt;
use std::hash::Hasher;
use std::io::Cursor;
use std::str::FromStr;
use std::sync::Arc;

use base64::Engine;
use fnv::FnvHasher;
use image::RgbImage;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Absolute tolerance on the sum of a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Entries below this are treated as a genuine negative probability.
pub const NEGATIVE_TOL: f64 = 1e-9;

// Sums this close to one are left untouched, which keeps validation idempotent.
const RENORM_SLACK: f64 = 1e-12;

/// Probability vector over the vocabulary at one generation step.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TokenDistribution(Vec<f64>);

impl TokenDistribution {
    /// Validates `probs`, clamping sub-tolerance negatives to zero and
    /// renormalizing when the sum is off by at most [`NORMALIZATION_TOL`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_distribution(probs)
    }

    pub fn uniform(size: usize) -> Self {
        TokenDistribution(vec![1.0 / size as f64; size])
    }

    pub fn one_hot(size: usize, token: TokenId) -> Self {
        let mut probs = vec![0.0; size];
        probs[token as usize] = 1.0;
        TokenDistribution(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, token: TokenId) -> f64 {
        self.0[token as usize]
    }

    pub fn argmax(&self) -> TokenId {
        argmax(&self.0) as TokenId
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

impl<'de> Deserialize<'de> for TokenDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(deserializer)?;
        validate_distribution(probs).map_err(serde::de::Error::custom)
    }
}

/// Checks non-negativity and normalization, renormalizing within tolerance.
pub fn validate_distribution(mut probs: Vec<f64>) -> Result<TokenDistribution> {
    if probs.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    for (index, p) in probs.iter_mut().enumerate() {
        if !p.is_finite() || *p < -NEGATIVE_TOL {
            return Err(Error::NegativeProb { index, value: *p });
        }
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { sum });
    }
    if (sum - 1.0).abs() > RENORM_SLACK {
        probs.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(TokenDistribution(probs))
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Stable 64-bit FNV-1a hashing used for context keys and seed derivation.
#[derive(Default)]
pub struct StableHasher(FnvHasher);

impl StableHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.0.write(&(bytes.len() as u64).to_le_bytes());
        self.0.write(bytes);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.write(&v.to_le_bytes());
        self
    }

    pub fn finish(&self) -> u64 {
        self.0.finish()
    }
}

/// Derives an independent child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    StableHasher::new().u64(seed).bytes(label.as_bytes()).finish()
}

/// Fingerprint of an RGB raster: dimensions plus pixel bytes.
pub fn image_fingerprint(image: &RgbImage) -> u64 {
    StableHasher::new()
        .u64(image.width() as u64)
        .u64(image.height() as u64)
        .bytes(image.as_raw())
        .finish()
}

/// One (image, prompt) variant fed to the generator.
#[derive(Clone)]
pub struct AugmentedInput {
    image: Option<Arc<RgbImage>>,
    image_fingerprint: u64,
    prompt: String,
    pub origin_id: String,
    pub variant_index: usize,
}

impl AugmentedInput {
    pub fn new(
        origin_id: impl Into<String>,
        variant_index: usize,
        prompt: impl Into<String>,
        image: Option<Arc<RgbImage>>,
    ) -> Result<Self> {
        let prompt = prompt.into();
        if prompt.is_empty() {
            return Err(Error::invalid("augmented prompt must be non-empty"));
        }
        let image_fingerprint = image.as_deref().map(image_fingerprint).unwrap_or(0);
        Ok(Self {
            image,
            image_fingerprint,
            prompt,
            origin_id: origin_id.into(),
            variant_index,
        })
    }

    /// Text-only input, convenient for tests and language-only tasks.
    pub fn text(prompt: impl Into<String>) -> Result<Self> {
        Self::new("", 0, prompt, None)
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn image(&self) -> Option<&Arc<RgbImage>> {
        self.image.as_ref()
    }

    /// Zero for text-only inputs.
    pub fn image_fingerprint(&self) -> u64 {
        self.image_fingerprint
    }

    pub fn with_prompt(&self, prompt: impl Into<String>) -> Result<Self> {
        Self::new(
            self.origin_id.clone(),
            self.variant_index,
            prompt,
            self.image.clone(),
        )
    }
}

impl fmt::Debug for AugmentedInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AugmentedInput")
            .field("origin_id", &self.origin_id)
            .field("variant_index", &self.variant_index)
            .field("prompt", &self.prompt)
            .field(
                "image",
                &self.image.as_ref().map(|i| (i.width(), i.height())),
            )
            .finish()
    }
}

impl PartialEq for AugmentedInput {
    fn eq(&self, other: &Self) -> bool {
        self.prompt == other.prompt
            && self.origin_id == other.origin_id
            && self.variant_index == other.variant_index
            && self.image_fingerprint == other.image_fingerprint
            && self.image.as_deref() == other.image.as_deref()
    }
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    image.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn encode_png_b64(image: &RgbImage) -> Result<String> {
    Ok(base64::engine::general_purpose::STANDARD.encode(encode_png(image)?))
}

pub fn decode_image_b64(data: &str) -> Result<RgbImage> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data)
        .map_err(|e| Error::invalid(format!("bad base64 image: {e}")))?;
    Ok(image::load_from_memory(&bytes)?.to_rgb8())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AugmentedInputRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_b64: Option<String>,
    prompt: String,
    origin_id: String,
    variant_index: usize,
}

impl Serialize for AugmentedInput {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let image_b64 = match self.image.as_deref() {
            Some(img) => Some(encode_png_b64(img).map_err(serde::ser::Error::custom)?),
            None => None,
        };
        AugmentedInputRepr {
            image_b64,
            prompt: self.prompt.clone(),
            origin_id: self.origin_id.clone(),
            variant_index: self.variant_index,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AugmentedInput {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = AugmentedInputRepr::deserialize(deserializer)?;
        let image = match repr.image_b64 {
            Some(data) => Some(Arc::new(
                decode_image_b64(&data).map_err(serde::de::Error::custom)?,
            )),
            None => None,
        };
        AugmentedInput::new(repr.origin_id, repr.variant_index, repr.prompt, image)
            .map_err(serde::de::Error::custom)
    }
}

/// Token-level aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Average,
    EntropyWeighted,
    Majority,
    MostConfident,
}

impl Aggregation {
    /// Discrete rules vote on tokens and have no distribution or hidden-state form.
    pub fn is_discrete(self) -> bool {
        matches!(self, Aggregation::Majority | Aggregation::MostConfident)
    }
}

/// Where aggregation happens: after the final layer, or on hidden states of layer `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layer {
    #[default]
    Final,
    Index(usize),
}

impl Serialize for Layer {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Layer::Final => serializer.serialize_str("final"),
            Layer::Index(l) => serializer.serialize_u64(*l as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Layer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Index(usize),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Name(s) if s.eq_ignore_ascii_case("final") => Ok(Layer::Final),
            Repr::Name(s) => Err(serde::de::Error::custom(format!(
                "layer must be \"final\" or an integer, got `{s}`"
            ))),
            Repr::Index(0) => Err(serde::de::Error::custom("layers are numbered from 1")),
            Repr::Index(l) => Ok(Layer::Index(l)),
        }
    }
}

/// Which input modalities get augmented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
    #[default]
    Both,
    None,
}

impl Modality {
    pub fn augments_text(self) -> bool {
        matches!(self, Modality::Text | Modality::Both)
    }

    pub fn augments_image(self) -> bool {
        matches!(self, Modality::Image | Modality::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextStrategy {
    #[default]
    Classical,
    SelfParaphrase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Low,
    Medium,
    #[default]
    High,
}

impl FromStr for Strength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Strength::Low),
            "medium" => Ok(Strength::Medium),
            "high" => Ok(Strength::High),
            other => Err(Error::invalid(format!("unknown strength `{other}`"))),
        }
    }
}

/// Every decoding knob. Defaults follow the final TTAug recipe: 16 augmentations,
/// simple averaging of final-layer probabilities, classical text augmentation
/// with consistency enforcement, high-strength image augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub n_aug: usize,
    pub aggregation: Aggregation,
    pub layer: Layer,
    pub modality: Modality,
    pub text_strategy: TextStrategy,
    pub image_strength: Strength,
    pub consistency_enforcement: bool,
    pub max_tokens: usize,
    pub seed: u64,
    pub eos_token: TokenId,
    /// Experimental: average log-probabilities instead of probabilities.
    pub logit_space: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_aug: 16,
            aggregation: Aggregation::Average,
            layer: Layer::Final,
            modality: Modality::Both,
            text_strategy: TextStrategy::Classical,
            image_strength: Strength::High,
            consistency_enforcement: true,
            max_tokens: 64,
            seed: 0,
            eos_token: 0,
            logit_space: false,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_aug == 0 {
            return Err(Error::InvalidConfig("n_aug must be >= 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidConfig("max_tokens must be >= 1".into()));
        }
        if self.aggregation.is_discrete() && self.layer != Layer::Final {
            return Err(Error::InvalidConfig(format!(
                "{:?} aggregation only works at the final layer",
                self.aggregation
            )));
        }
        if self.logit_space && self.layer != Layer::Final {
            return Err(Error::InvalidConfig(
                "logit-space averaging only applies at the final layer".into(),
            ));
        }
        Ok(())
    }
}

/// Result of one decoding run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub tokens: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_step_distributions: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregated_distributions: Option<Vec<TokenDistribution>>,
    pub wall_time_s: f64,
}

impl GenerationTrace {
    /// Tokens with a trailing EOS removed.
    pub fn content_tokens(&self, eos: TokenId) -> &[TokenId] {
        match self.tokens.split_last() {
            Some((&last, rest)) if last == eos => rest,
            _ => &self.tokens,
        }
    }

    /// Same tokens and distributions; wall time is ignored.
    pub fn same_output(&self, other: &Self) -> bool {
        self.tokens == other.tokens
            && self.per_step_distributions == other.per_step_distributions
            && self.aggregated_distributions == other.aggregated_distributions
    }
}

/// Benchmark task family, which selects the scoring metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "String", into = "String")]
pub enum TaskKind {
    Exact,
    Vqa,
    Relaxed,
    Substring,
    Mcq,
    Yesno,
    Caption,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Exact => "exact",
            TaskKind::Vqa => "vqa",
            TaskKind::Relaxed => "relaxed",
            TaskKind::Substring => "substring",
            TaskKind::Mcq => "mcq",
            TaskKind::Yesno => "yesno",
            TaskKind::Caption => "caption",
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exact" => TaskKind::Exact,
            "vqa" => TaskKind::Vqa,
            "relaxed" => TaskKind::Relaxed,
            "substring" => TaskKind::Substring,
            "mcq" => TaskKind::Mcq,
            "yesno" => TaskKind::Yesno,
            "caption" => TaskKind::Caption,
            other => return Err(Error::UnknownTask(other.to_string())),
        })
    }
}

impl TryFrom<String> for TaskKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TaskKind> for String {
    fn from(t: TaskKind) -> String {
        t.as_str().to_string()
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Labelled option of a multiple-choice question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionRecord {
    pub id: String,
    #[serde(default)]
    pub image_path: Option<String>,
    pub prompt: String,
    pub answers: Vec<String>,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<Choice>>,
    /// Marks mathematical-expression items, which are compared with all
    /// whitespace removed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub math: bool,
}

impl QuestionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.answers.is_empty() {
            return Err(Error::invalid(format!("record {}: no answers", self.id)));
        }
        if self.task == TaskKind::Mcq {
            let choices = self.choices.as_ref().ok_or_else(|| {
                Error::invalid(format!("record {}: mcq without choices", self.id))
            })?;
            let mut seen = std::collections::HashSet::new();
            for c in choices {
                let mut chars = c.label.chars();
                let ok = matches!((chars.next(), chars.next()), (Some(ch), None) if ch.is_ascii_uppercase());
                if !ok || !seen.insert(c.label.clone()) {
                    return Err(Error::invalid(format!(
                        "record {}: choice labels must be distinct single uppercase letters",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reads a JSON Lines corpus of question records, skipping blank lines.
pub fn read_records_jsonl(text: &str) -> Result<Vec<QuestionRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuestionRecord = serde_json::from_str(line).map_err(|e| {
            // Surface unknown task names with their own error kind.
            if let Some(task) = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("task").and_then(|t| t.as_str()).map(str::to_owned))
            {
                if task.parse::<TaskKind>().is_err() {
                    return Error::UnknownTask(task);
                }
            }
            Error::invalid(format!("line {}: {e}", lineno + 1))
        })?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

/// One scored outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub id: String,
    pub score: f64,
    pub metric_name: String,
    pub prediction: String,
    /// Set when the record could not be processed; such records score 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
