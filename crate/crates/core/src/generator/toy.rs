//! A deterministic table-driven generator.
//!
//! Each context `(prompt, image fingerprint, prefix)` is hashed to a stable
//! 64-bit key and looked up in a transition table. Rule rows (prompt suffix,
//! substring or wildcard matches) are consulted next, in declaration order,
//! and anything else falls back to the uniform distribution.
//!
//! The forward pass is a stack of `L` layers over a vector of length
//! `|V|`. Layer 1 holds `p^(1/L)` and layer `k` raises the previous state to
//! the power `k / (k - 1)`, so layer `ℓ` holds `p^(ℓ/L)` and the output head
//! renormalizes layer `L`. Averaging hidden states at layer `ℓ` is therefore
//! a power mean of the branch distributions with exponent `ℓ / L`, which
//! becomes the arithmetic mean at the last layer.
//!
//! When trainable, every context carries an additive logit offset `Δ` on
//! top of the table, `p = softmax(ln p_table + Δ)`. Cross-entropy gradients
//! with respect to `Δ` are `p - onehot(target)` in closed form.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_layer, Capabilities, Generator, ParamSlot, Trainable, TrainingExample, WeightSnapshot};
use crate::error::{Error, Result};
use crate::types::{validate_distribution, AugmentedInput, StableHasher, TokenDistribution, TokenId};

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

const DEFAULT_CONTEXT_LIMIT: usize = 4096;

/// How a rule row matches the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMatch {
    Exact(String),
    Suffix(String),
    Contains(String),
    Any,
}

impl PromptMatch {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            PromptMatch::Exact(p) => prompt == p,
            PromptMatch::Suffix(s) => prompt.ends_with(s.as_str()),
            PromptMatch::Contains(s) => prompt.contains(s.as_str()),
            PromptMatch::Any => true,
        }
    }
}

/// How a row matches the image. `Fingerprint(0)` is the text-only input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageMatch {
    #[default]
    Any,
    Fingerprint(u64),
}

/// Dense or sparse (token string → probability) distribution in a spec file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbsSpec {
    Dense(Vec<f64>),
    Sparse(std::collections::BTreeMap<String, f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowSpec {
    pub prompt: PromptMatch,
    #[serde(default)]
    pub image: ImageMatch,
    /// Prefix as token strings.
    #[serde(default)]
    pub prefix: Vec<String>,
    pub probs: ProbsSpec,
}

/// Serialized description of a toy model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyModelSpec {
    pub vocab: Vec<String>,
    pub eos: String,
    #[serde(default = "default_layers")]
    pub num_layers: usize,
    #[serde(default = "default_context_limit")]
    pub context_limit: usize,
    #[serde(default)]
    pub trainable: bool,
    #[serde(default)]
    pub rows: Vec<RowSpec>,
}

fn default_layers() -> usize {
    4
}

fn default_context_limit() -> usize {
    DEFAULT_CONTEXT_LIMIT
}

#[derive(Debug, Clone)]
struct Rule {
    prompt: PromptMatch,
    image: ImageMatch,
    prefix: Vec<TokenId>,
    probs: Arc<TokenDistribution>,
}

#[derive(Debug)]
pub struct ToyModel {
    id: u64,
    vocab: Vec<String>,
    eos: TokenId,
    num_layers: usize,
    context_limit: usize,
    trainable: bool,
    table: HashMap<u64, Arc<TokenDistribution>>,
    rules: Vec<Rule>,
    deltas: HashMap<u64, Vec<f64>>,
    grads: HashMap<u64, Vec<f64>>,
    latest_snapshot: Option<WeightSnapshot>,
}

impl Clone for ToyModel {
    fn clone(&self) -> Self {
        Self {
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            vocab: self.vocab.clone(),
            eos: self.eos,
            num_layers: self.num_layers,
            context_limit: self.context_limit,
            trainable: self.trainable,
            table: self.table.clone(),
            rules: self.rules.clone(),
            deltas: self.deltas.clone(),
            grads: HashMap::new(),
            latest_snapshot: None,
        }
    }
}

/// Stable key of a generation context.
pub fn context_hash(prompt: &str, image_fingerprint: u64, prefix: &[TokenId]) -> u64 {
    let mut h = StableHasher::new();
    h.bytes(prompt.as_bytes())
        .u64(image_fingerprint)
        .u64(prefix.len() as u64);
    for &t in prefix {
        h.u64(t as u64);
    }
    h.finish()
}

pub struct ToyModelBuilder {
    model: ToyModel,
}

impl ToyModelBuilder {
    pub fn layers(mut self, num_layers: usize) -> Self {
        self.model.num_layers = num_layers.max(1);
        self
    }

    pub fn context_limit(mut self, limit: usize) -> Self {
        self.model.context_limit = limit;
        self
    }

    pub fn trainable(mut self, trainable: bool) -> Self {
        self.model.trainable = trainable;
        self
    }

    /// Exact row for `(prompt, image fingerprint, prefix)`.
    pub fn row(
        mut self,
        prompt: &str,
        image_fingerprint: u64,
        prefix: &[TokenId],
        probs: Vec<f64>,
    ) -> Result<Self> {
        let dist = self.model.checked_dist(probs)?;
        self.model
            .table
            .insert(context_hash(prompt, image_fingerprint, prefix), Arc::new(dist));
        Ok(self)
    }

    /// Exact row for an existing input.
    pub fn input_row(self, input: &AugmentedInput, prefix: &[TokenId], probs: Vec<f64>) -> Result<Self> {
        let fp = input.image_fingerprint();
        self.row(input.prompt(), fp, prefix, probs)
    }

    pub fn rule(
        mut self,
        prompt: PromptMatch,
        image: ImageMatch,
        prefix: &[TokenId],
        probs: Vec<f64>,
    ) -> Result<Self> {
        let dist = self.model.checked_dist(probs)?;
        self.model.rules.push(Rule {
            prompt,
            image,
            prefix: prefix.to_vec(),
            probs: Arc::new(dist),
        });
        Ok(self)
    }

    /// Rows that make greedy decoding of `prompt` emit `text` then EOS.
    pub fn script(mut self, prompt: &str, image_fingerprint: u64, text: &str) -> Result<Self> {
        let mut tokens = super::text::tokenize(&self.model.vocab, text)?;
        tokens.push(self.model.eos);
        let n = self.model.vocab.len();
        for j in 0..tokens.len() {
            let dist = TokenDistribution::one_hot(n, tokens[j]);
            self.model.table.insert(
                context_hash(prompt, image_fingerprint, &tokens[..j]),
                Arc::new(dist),
            );
        }
        Ok(self)
    }

    pub fn build(self) -> ToyModel {
        self.model
    }
}

impl ToyModel {
    pub fn builder(vocab: Vec<String>, eos: &str) -> Result<ToyModelBuilder> {
        if vocab.len() < 2 {
            return Err(Error::invalid("toy vocabulary needs at least two tokens"));
        }
        let eos = vocab
            .iter()
            .position(|t| t == eos)
            .ok_or_else(|| Error::invalid(format!("EOS token `{eos}` not in vocabulary")))?
            as TokenId;
        Ok(ToyModelBuilder {
            model: ToyModel {
                id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
                vocab,
                eos,
                num_layers: default_layers(),
                context_limit: DEFAULT_CONTEXT_LIMIT,
                trainable: false,
                table: HashMap::new(),
                rules: Vec::new(),
                deltas: HashMap::new(),
                grads: HashMap::new(),
                latest_snapshot: None,
            },
        })
    }

    /// Vocabulary of every printable ASCII character plus an `<eos>` token at id 0.
    pub fn char_vocab() -> Vec<String> {
        std::iter::once("<eos>".to_string())
            .chain((b' '..=b'~').map(|b| (b as char).to_string()))
            .collect()
    }

    pub fn from_spec(spec: &ToyModelSpec) -> Result<Self> {
        let mut b = ToyModel::builder(spec.vocab.clone(), &spec.eos)?
            .layers(spec.num_layers)
            .context_limit(spec.context_limit)
            .trainable(spec.trainable);
        for row in &spec.rows {
            let prefix = row
                .prefix
                .iter()
                .map(|t| b.model.token_id(t))
                .collect::<Result<Vec<_>>>()?;
            let probs = b.model.dense_probs(&row.probs)?;
            b = match (&row.prompt, row.image) {
                (PromptMatch::Exact(p), ImageMatch::Fingerprint(fp)) => {
                    let p = p.clone();
                    b.row(&p, fp, &prefix, probs)?
                }
                (prompt, image) => b.rule(prompt.clone(), image, &prefix, probs)?,
            };
        }
        Ok(b.build())
    }

    pub fn from_spec_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ModelUnavailable(format!("{}: {e}", path.display())))?;
        let spec: ToyModelSpec = serde_json::from_str(&text)?;
        Self::from_spec(&spec)
    }

    pub fn token_id(&self, token: &str) -> Result<TokenId> {
        self.vocab
            .iter()
            .position(|t| t == token)
            .map(|i| i as TokenId)
            .ok_or_else(|| Error::invalid(format!("token `{token}` not in vocabulary")))
    }

    fn dense_probs(&self, spec: &ProbsSpec) -> Result<Vec<f64>> {
        match spec {
            ProbsSpec::Dense(v) => Ok(v.clone()),
            ProbsSpec::Sparse(map) => {
                let mut probs = vec![0.0; self.vocab.len()];
                for (tok, &p) in map {
                    probs[self.token_id(tok)? as usize] = p;
                }
                Ok(probs)
            }
        }
    }

    fn checked_dist(&self, probs: Vec<f64>) -> Result<TokenDistribution> {
        if probs.len() != self.vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vocab.len(),
                actual: probs.len(),
            });
        }
        validate_distribution(probs)
    }

    fn table_lookup(&self, key: u64, input: &AugmentedInput, prefix: &[TokenId]) -> Option<&Arc<TokenDistribution>> {
        if let Some(d) = self.table.get(&key) {
            return Some(d);
        }
        self.rules
            .iter()
            .find(|r| {
                r.prefix == prefix
                    && r.prompt.matches(input.prompt())
                    && match r.image {
                        ImageMatch::Any => true,
                        ImageMatch::Fingerprint(fp) => fp == input.image_fingerprint(),
                    }
            })
            .map(|r| &r.probs)
    }

    /// The distribution before the layer stack: table, rule or uniform, then
    /// shifted by the adapted logit offsets when present.
    fn base_distribution(&self, key: u64, input: &AugmentedInput, prefix: &[TokenId]) -> Vec<f64> {
        let table = match self.table_lookup(key, input, prefix) {
            Some(d) => d.probs().to_vec(),
            None => TokenDistribution::uniform(self.vocab.len()).into_inner(),
        };
        match self.deltas.get(&key) {
            Some(delta) => adapted(&table, delta),
            None => table,
        }
    }

    fn check_prefix(&self, prefix: &[TokenId]) -> Result<()> {
        if prefix.len() >= self.context_limit {
            return Err(Error::ContextOverflow {
                len: prefix.len(),
                limit: self.context_limit,
            });
        }
        Ok(())
    }

    /// Hidden state of layer `layer` for a base distribution.
    fn layer_state(&self, base: &[f64], layer: usize) -> Vec<f64> {
        let first = 1.0 / self.num_layers as f64;
        let mut h: Vec<f64> = base.iter().map(|&p| p.powf(first)).collect();
        self.run_layers(&mut h, 1, layer);
        h
    }

    fn run_layers(&self, h: &mut [f64], from: usize, to: usize) {
        for k in from + 1..=to {
            let exponent = k as f64 / (k - 1) as f64;
            h.iter_mut().for_each(|x| *x = x.powf(exponent));
        }
    }

    fn readout(&self, h: &[f64]) -> Result<TokenDistribution> {
        let sum: f64 = h.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Ok(TokenDistribution::uniform(h.len()));
        }
        validate_distribution(h.iter().map(|x| x / sum).collect())
    }
}

fn adapted(table: &[f64], delta: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = table.iter().zip(delta).map(|(p, d)| p.ln() + d).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Generator for ToyModel {
    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn num_layers(&self) -> usize {
        self.num_layers
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            hidden_states: true,
            trainable: self.trainable,
        }
    }

    fn context_limit(&self) -> usize {
        self.context_limit
    }

    fn eos_token(&self) -> Option<TokenId> {
        Some(self.eos)
    }

    fn step(&self, input: &AugmentedInput, prefix: &[TokenId]) -> Result<TokenDistribution> {
        self.check_prefix(prefix)?;
        let key = context_hash(input.prompt(), input.image_fingerprint(), prefix);
        let base = self.base_distribution(key, input, prefix);
        self.readout(&self.layer_state(&base, self.num_layers))
    }

    fn step_hidden(&self, input: &AugmentedInput, prefix: &[TokenId], layer: usize) -> Result<Vec<f64>> {
        check_layer(layer, self.num_layers)?;
        self.check_prefix(prefix)?;
        let key = context_hash(input.prompt(), input.image_fingerprint(), prefix);
        let base = self.base_distribution(key, input, prefix);
        Ok(self.layer_state(&base, layer))
    }

    fn resume_from_hidden(&self, hidden: &[f64], layer: usize) -> Result<TokenDistribution> {
        check_layer(layer, self.num_layers)?;
        if hidden.len() != self.vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vocab.len(),
                actual: hidden.len(),
            });
        }
        let mut h: Vec<f64> = hidden.iter().map(|&x| x.max(0.0)).collect();
        self.run_layers(&mut h, layer, self.num_layers);
        self.readout(&h)
    }

    fn as_trainable(&mut self) -> Option<&mut dyn Trainable> {
        if self.trainable {
            Some(self)
        } else {
            None
        }
    }
}

impl Trainable for ToyModel {
    fn clone_weights(&mut self) -> Result<WeightSnapshot> {
        let snap = WeightSnapshot {
            owner: self.id,
            state: Arc::new(self.deltas.clone()),
        };
        self.latest_snapshot = Some(snap.clone());
        Ok(snap)
    }

    fn restore_weights(&mut self, snapshot: &WeightSnapshot) -> Result<()> {
        if snapshot.owner != self.id {
            return Err(Error::ForeignSnapshot);
        }
        let deltas = snapshot
            .state
            .downcast_ref::<HashMap<u64, Vec<f64>>>()
            .ok_or(Error::ForeignSnapshot)?;
        self.deltas = deltas.clone();
        self.grads.clear();
        Ok(())
    }

    fn restore_latest(&mut self) -> Result<()> {
        let snap = self.latest_snapshot.clone().ok_or(Error::NoSnapshot)?;
        self.restore_weights(&snap)
    }

    fn zero_grad(&mut self) {
        self.grads.values_mut().for_each(|g| g.fill(0.0));
    }

    fn accumulate_gradient(&mut self, example: &TrainingExample, scale: f64) -> Result<f64> {
        let target = &example.target;
        if target.is_empty() {
            return Ok(0.0);
        }
        let n = self.vocab.len();
        let per_token = scale / target.len() as f64;
        let mut loss = 0.0;
        for j in 0..target.len() {
            let prefix = &target[..j];
            self.check_prefix(prefix)?;
            let y = target[j] as usize;
            if y >= n {
                return Err(Error::invalid(format!("target token {y} outside vocabulary")));
            }
            let key = context_hash(example.input.prompt(), example.input.image_fingerprint(), prefix);
            let p = self.base_distribution(key, &example.input, prefix);
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            self.deltas.entry(key).or_insert_with(|| vec![0.0; n]);
            let grad = self.grads.entry(key).or_insert_with(|| vec![0.0; n]);
            for (v, g) in grad.iter_mut().enumerate() {
                let onehot = if v == y { 1.0 } else { 0.0 };
                *g += per_token * (p[v] - onehot);
            }
        }
        Ok(loss / target.len() as f64)
    }

    fn parameters(&mut self) -> Vec<ParamSlot<'_>> {
        let n = self.vocab.len();
        for key in self.deltas.keys() {
            self.grads.entry(*key).or_insert_with(|| vec![0.0; n]);
        }
        let grads = &self.grads;
        let mut slots: Vec<ParamSlot<'_>> = self
            .deltas
            .iter_mut()
            .map(|(key, values)| ParamSlot {
                key: *key,
                values: values.as_mut_slice(),
                grads: grads[key].as_slice(),
            })
            .collect();
        slots.sort_by_key(|s| s.key);
        slots
    }
}
