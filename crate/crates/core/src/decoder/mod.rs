//! Autoregressive decoding with token-level aggregation across augmented inputs.
//!
//! At step `j` every augmented input is queried against the same shared
//! prefix `y<j`, the `N` next-token distributions are aggregated, and the
//! greedy token of the aggregate is appended to the shared prefix. With a
//! hidden layer selected the branch hidden states at that layer are averaged
//! instead and the generator finishes the forward pass on the average.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::types::{
    argmax, Aggregation, AugmentedInput, GenerationConfig, GenerationTrace, Layer,
    TokenDistribution, TokenId,
};

pub mod aggregate;

pub use aggregate::{
    aggregate_average, aggregate_entropy_weighted, aggregate_log_space, aggregate_majority,
    aggregate_most_confident, aggregate_weighted, StepMatrix,
};

/// How the `N` branch queries of one step are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DecodeOptions {
    pub mode: ExecutionMode,
    /// Keep per-step branch and aggregated distributions in the trace.
    pub record: bool,
}

impl DecodeOptions {
    pub fn recording(mode: ExecutionMode) -> Self {
        Self { mode, record: true }
    }
}

/// Outcome of aggregating one step.
#[derive(Debug, Clone)]
pub struct StepChoice {
    pub token: TokenId,
    /// Present for the continuous rules.
    pub distribution: Option<TokenDistribution>,
}

/// Anything that turns a step matrix into the next token.
pub trait StepAggregator {
    fn choose(&mut self, m: &StepMatrix) -> Result<StepChoice>;
}

/// The four fixed rules (plus the experimental log-space average).
#[derive(Debug, Clone, Copy)]
pub struct RuleAggregator {
    pub rule: Aggregation,
    pub logit_space: bool,
}

impl RuleAggregator {
    pub fn from_config(cfg: &GenerationConfig) -> Self {
        Self {
            rule: cfg.aggregation,
            logit_space: cfg.logit_space,
        }
    }
}

impl StepAggregator for RuleAggregator {
    fn choose(&mut self, m: &StepMatrix) -> Result<StepChoice> {
        let distribution = match self.rule {
            Aggregation::Average if self.logit_space => aggregate_log_space(m)?,
            Aggregation::Average => aggregate_average(m)?,
            Aggregation::EntropyWeighted => aggregate_entropy_weighted(m)?,
            Aggregation::Majority => {
                return Ok(StepChoice {
                    token: aggregate_majority(m),
                    distribution: None,
                })
            }
            Aggregation::MostConfident => {
                return Ok(StepChoice {
                    token: aggregate_most_confident(m),
                    distribution: None,
                })
            }
        };
        Ok(StepChoice {
            token: distribution.argmax(),
            distribution: Some(distribution),
        })
    }
}

/// TTAug decoding with the configured rule, sequential execution, no recording.
pub fn ttaug_generate<G: Generator + ?Sized>(
    g: &G,
    inputs: &[AugmentedInput],
    cfg: &GenerationConfig,
) -> Result<GenerationTrace> {
    generate_with(g, inputs, cfg, DecodeOptions::default())
}

pub fn generate_with<G: Generator + ?Sized>(
    g: &G,
    inputs: &[AugmentedInput],
    cfg: &GenerationConfig,
    opts: DecodeOptions,
) -> Result<GenerationTrace> {
    let mut rule = RuleAggregator::from_config(cfg);
    generate_with_aggregator(g, inputs, cfg, opts, &mut rule)
}

/// Plain greedy decoding of a single input.
pub fn greedy_generate<G: Generator + ?Sized>(
    g: &G,
    input: &AugmentedInput,
    cfg: &GenerationConfig,
) -> Result<GenerationTrace> {
    let single = GenerationConfig {
        n_aug: 1,
        aggregation: Aggregation::Average,
        layer: Layer::Final,
        logit_space: false,
        ..cfg.clone()
    };
    ttaug_generate(g, std::slice::from_ref(input), &single)
}

/// Decoding loop shared by every token-level method. `aggregator` is used
/// at the final layer; a hidden-layer config bypasses it.
pub fn generate_with_aggregator<G: Generator + ?Sized>(
    g: &G,
    inputs: &[AugmentedInput],
    cfg: &GenerationConfig,
    opts: DecodeOptions,
    aggregator: &mut dyn StepAggregator,
) -> Result<GenerationTrace> {
    cfg.validate()?;
    if inputs.len() != cfg.n_aug {
        return Err(Error::InputCountMismatch {
            expected: cfg.n_aug,
            actual: inputs.len(),
        });
    }
    if let Layer::Index(l) = cfg.layer {
        if !g.capabilities().hidden_states {
            return Err(Error::UnsupportedCapability("hidden_states"));
        }
        crate::generator::check_layer(l, g.num_layers())?;
    }

    let start = Instant::now();
    let mut tokens: Vec<TokenId> = Vec::new();
    let mut per_step = opts.record.then(Vec::new);
    let mut aggregated = opts.record.then(Vec::new);

    while tokens.len() < cfg.max_tokens {
        let choice = match cfg.layer {
            Layer::Final => {
                let rows = query(inputs, opts.mode, |x| g.step(x, &tokens))?;
                let m = StepMatrix::new(rows)?;
                let choice = aggregator.choose(&m)?;
                if let Some(steps) = per_step.as_mut() {
                    steps.push(m.rows().iter().map(|r| r.probs().to_vec()).collect());
                }
                choice
            }
            Layer::Index(layer) => hidden_step(g, inputs, &tokens, layer, cfg.aggregation, opts.mode)?,
        };
        if let (Some(out), Some(d)) = (aggregated.as_mut(), choice.distribution) {
            out.push(d);
        }
        tokens.push(choice.token);
        if choice.token == cfg.eos_token {
            break;
        }
    }

    Ok(GenerationTrace {
        tokens,
        per_step_distributions: per_step,
        aggregated_distributions: aggregated,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn query<T, F>(inputs: &[AugmentedInput], mode: ExecutionMode, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&AugmentedInput) -> Result<T> + Sync + Send,
{
    match mode {
        ExecutionMode::Parallel if inputs.len() > 1 => inputs.par_iter().map(f).collect(),
        // A single branch gains nothing from the thread pool.
        _ => inputs.iter().map(f).collect(),
    }
}

/// Aggregates hidden states at `layer` and resumes the forward pass.
/// Entropy weights come from each branch's own output distribution.
fn hidden_step<G: Generator + ?Sized>(
    g: &G,
    inputs: &[AugmentedInput],
    prefix: &[TokenId],
    layer: usize,
    rule: Aggregation,
    mode: ExecutionMode,
) -> Result<StepChoice> {
    let hidden = query(inputs, mode, |x| g.step_hidden(x, prefix, layer))?;
    if let Some(bad) = hidden.iter().find(|h| h.len() != hidden[0].len()) {
        return Err(Error::RaggedMatrix {
            expected: hidden[0].len(),
            actual: bad.len(),
        });
    }
    let merged = match rule {
        Aggregation::Average => aggregate::mean_vectors(hidden.iter().map(Vec::as_slice)),
        Aggregation::EntropyWeighted => {
            let finals = query(inputs, mode, |x| g.step(x, prefix))?;
            let w = aggregate::entropy_weights(&StepMatrix::new(finals)?);
            aggregate::weighted_sum(hidden.iter().map(Vec::as_slice), &w)
        }
        Aggregation::Majority | Aggregation::MostConfident => {
            unreachable!("validated: discrete rules run at the final layer")
        }
    };
    let distribution = g.resume_from_hidden(&merged, layer)?;
    Ok(StepChoice {
        token: argmax(distribution.probs()) as TokenId,
        distribution: Some(distribution),
    })
}

#[derive(Serialize)]
struct TraceLine<'a> {
    step: usize,
    token: TokenId,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<&'a Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    aggregated: Option<&'a [f64]>,
}

/// Writes one JSON line per generation step.
pub fn write_trace_jsonl(trace: &GenerationTrace, mut out: impl Write) -> Result<()> {
    for (step, &token) in trace.tokens.iter().enumerate() {
        let line = TraceLine {
            step,
            token,
            rows: trace.per_step_distributions.as_ref().and_then(|s| s.get(step)),
            aggregated: trace
                .aggregated_distributions
                .as_ref()
                .and_then(|a| a.get(step))
                .map(|d| d.probs()),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
