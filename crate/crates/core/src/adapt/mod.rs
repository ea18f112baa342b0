//! Test-time adaptation.
//!
//! Two variants share the AdamW optimizer in [`optim`]:
//!
//! * aggregation-weight optimization, which at every decoding step learns
//!   mixture weights over the `N` branch distributions by minimizing the
//!   entropy of the mixture ([`optimize_weights`], [`EntropyMinAggregator`]);
//! * parameter adaptation, which fine-tunes a [`Trainable`] generator on its
//!   own TTAug consensus output for a few rounds and then restores the
//!   original weights ([`ttadapt_answer`]).

use serde::{Deserialize, Serialize};

use crate::decoder::aggregate::{softmax, weighted_sum};
use crate::decoder::{
    aggregate_weighted, generate_with_aggregator, ttaug_generate, DecodeOptions, StepAggregator,
    StepChoice, StepMatrix,
};
use crate::error::{Error, Result};
use crate::generator::{Generator, Trainable, TrainingExample};
use crate::types::{Aggregation, AugmentedInput, GenerationConfig, GenerationTrace, Layer, TokenId};

pub mod optim;

pub use optim::{clip_grad_norm, cosine_with_warmup, AdamW, AdamWParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightOptConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub micro_steps: usize,
    pub grad_clip_norm: f64,
    pub entropy_eps: f64,
}

impl Default for WeightOptConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            weight_decay: 1e-4,
            micro_steps: 20,
            grad_clip_norm: 1.0,
            entropy_eps: 1e-12,
        }
    }
}

impl WeightOptConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
            ("grad_clip_norm", self.grad_clip_norm),
            ("entropy_eps", self.entropy_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("weight_opt.{name} must be positive")));
            }
        }
        if self.micro_steps == 0 {
            return Err(Error::InvalidConfig("weight_opt.micro_steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub pseudo_iterations: usize,
    /// Optimizer steps per non-final iteration.
    pub train_steps: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub max_grad_norm: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            pseudo_iterations: 3,
            train_steps: 6,
            learning_rate: 2e-6,
            warmup_steps: 5,
            weight_decay: 0.01,
            batch_size: 64,
            grad_accum: 2,
            max_grad_norm: 1.0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pseudo_iterations == 0 {
            return Err(Error::InvalidConfig("adapt.pseudo_iterations must be >= 1".into()));
        }
        if self.batch_size == 0 || self.grad_accum == 0 {
            return Err(Error::InvalidConfig("adapt.batch_size and grad_accum must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 || !(self.max_grad_norm > 0.0) {
            return Err(Error::InvalidConfig("adapt learning rate, decay or clip out of range".into()));
        }
        Ok(())
    }
}

fn mixture(weights: &[f64], m: &StepMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if weights.len() != m.n() {
        return Err(Error::DimensionMismatch {
            expected: m.n(),
            actual: weights.len(),
        });
    }
    let a = softmax(weights);
    let p = weighted_sum(m.rows().iter().map(|r| r.probs()), &a);
    Ok((a, p))
}

/// Entropy of the mixture `Σᵢ softmax(w)ᵢ · rowᵢ`, in nats, with `eps`
/// inside the logarithm.
pub fn marginal_entropy(weights: &[f64], m: &StepMatrix, eps: f64) -> Result<f64> {
    let (_, p) = mixture(weights, m)?;
    Ok(-p.iter().map(|&q| q * (q + eps).ln()).sum::<f64>())
}

/// Gradient of [`marginal_entropy`] with respect to the raw weights.
pub fn entropy_gradient(weights: &[f64], m: &StepMatrix, eps: f64) -> Result<Vec<f64>> {
    let (a, p) = mixture(weights, m)?;
    let dh_dp: Vec<f64> = p.iter().map(|&q| -(q + eps).ln() - q / (q + eps)).collect();
    let g: Vec<f64> = m
        .rows()
        .iter()
        .map(|r| r.probs().iter().zip(&dh_dp).map(|(x, d)| x * d).sum())
        .collect();
    let mean: f64 = a.iter().zip(&g).map(|(ai, gi)| ai * gi).sum();
    Ok(a.iter().zip(&g).map(|(ai, gi)| ai * (gi - mean)).collect())
}

/// Result of optimizing the weights of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWeights {
    /// Softmax-normalized weights.
    pub weights: Vec<f64>,
    pub initial_entropy: f64,
    pub final_entropy: f64,
}

/// Runs `cfg.micro_steps` AdamW steps on the raw weights of one step,
/// starting from `1/N` everywhere.
pub fn optimize_step(m: &StepMatrix, cfg: &WeightOptConfig) -> Result<StepWeights> {
    let n = m.n();
    let mut w = vec![1.0 / n as f64; n];
    let initial_entropy = marginal_entropy(&w, m, cfg.entropy_eps)?;
    let mut opt = AdamW::new(AdamWParams::new(cfg.learning_rate, cfg.weight_decay));
    for _ in 0..cfg.micro_steps {
        let mut grad = entropy_gradient(&w, m, cfg.entropy_eps)?;
        clip_grad_norm(&mut [grad.as_mut_slice()], cfg.grad_clip_norm);
        opt.begin_step();
        opt.update(0, &mut w, &grad, cfg.learning_rate);
    }
    Ok(StepWeights {
        final_entropy: marginal_entropy(&w, m, cfg.entropy_eps)?,
        weights: softmax(&w),
        initial_entropy,
    })
}

/// Optimized weights for each step of a sequence; every step starts fresh.
pub fn optimize_weights(steps: &[StepMatrix], cfg: &WeightOptConfig) -> Result<Vec<Vec<f64>>> {
    steps
        .iter()
        .map(|m| optimize_step(m, cfg).map(|s| s.weights))
        .collect()
}

/// Step aggregator that mixes branches with entropy-minimizing weights.
#[derive(Debug, Clone)]
pub struct EntropyMinAggregator {
    pub cfg: WeightOptConfig,
    /// Weights chosen at each step so far.
    pub history: Vec<StepWeights>,
}

impl EntropyMinAggregator {
    pub fn new(cfg: WeightOptConfig) -> Self {
        Self {
            cfg,
            history: Vec::new(),
        }
    }
}

impl StepAggregator for EntropyMinAggregator {
    fn choose(&mut self, m: &StepMatrix) -> Result<StepChoice> {
        let step = optimize_step(m, &self.cfg)?;
        let distribution = aggregate_weighted(m, &step.weights)?;
        self.history.push(step);
        Ok(StepChoice {
            token: distribution.argmax(),
            distribution: Some(distribution),
        })
    }
}

/// Decodes with per-step optimized aggregation weights.
pub fn ttadapt_weights_generate<G: Generator + ?Sized>(
    g: &G,
    inputs: &[AugmentedInput],
    gen_cfg: &GenerationConfig,
    cfg: &WeightOptConfig,
    opts: DecodeOptions,
) -> Result<GenerationTrace> {
    cfg.validate()?;
    if gen_cfg.layer != Layer::Final {
        return Err(Error::InvalidConfig(
            "aggregation-weight optimization runs on final-layer distributions".into(),
        ));
    }
    let mut agg = EntropyMinAggregator::new(*cfg);
    generate_with_aggregator(g, inputs, gen_cfg, opts, &mut agg)
}

/// Fine-tunes on `(input, pseudolabel)` pairs for `cfg.train_steps`
/// optimizer steps. Each micro-batch holds `cfg.batch_size` examples formed
/// by cycling through `inputs`; gradients of `cfg.grad_accum` micro-batches
/// are averaged per step. Returns the mean loss of each step.
pub fn fine_tune(
    model: &mut dyn Trainable,
    inputs: &[AugmentedInput],
    pseudolabel: &[TokenId],
    cfg: &AdaptConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::invalid("fine-tuning needs at least one input"));
    }
    let examples: Vec<TrainingExample> = inputs
        .iter()
        .map(|x| TrainingExample {
            input: x.clone(),
            target: pseudolabel.to_vec(),
        })
        .collect();
    let per_step = cfg.batch_size * cfg.grad_accum;
    let scale = 1.0 / per_step as f64;
    let mut opt = AdamW::new(AdamWParams::new(cfg.learning_rate, cfg.weight_decay));
    let mut cursor = 0usize;
    let mut losses = Vec::with_capacity(cfg.train_steps);
    for step in 0..cfg.train_steps {
        model.zero_grad();
        let mut loss = 0.0;
        for _ in 0..per_step {
            loss += model.accumulate_gradient(&examples[cursor % examples.len()], scale)?;
            cursor += 1;
        }
        losses.push(loss / per_step as f64);
        let lr = cfg.learning_rate * cosine_with_warmup(step, cfg.warmup_steps, cfg.train_steps);
        opt.begin_step();
        let mut params = model.parameters();
        let mut grads: Vec<Vec<f64>> = params.iter().map(|p| p.grads.to_vec()).collect();
        {
            let mut views: Vec<&mut [f64]> = grads.iter_mut().map(Vec::as_mut_slice).collect();
            clip_grad_norm(&mut views, cfg.max_grad_norm);
        }
        for (slot, grad) in params.iter_mut().zip(&grads) {
            opt.update(slot.key, slot.values, grad, lr);
        }
    }
    Ok(losses)
}

/// Everything produced while answering one question with parameter adaptation.
#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    /// Output of the final iteration.
    pub trace: GenerationTrace,
    /// Pseudolabel of every iteration, in order; the last equals `trace.tokens`.
    pub pseudolabels: Vec<Vec<TokenId>>,
    /// Per-step training losses of each non-final iteration.
    pub losses: Vec<Vec<f64>>,
}

/// Answers one question by iterated pseudolabelling and fine-tuning.
/// Pseudolabels always come from TTAug with average aggregation. The model's
/// weights are restored before returning, also on error.
pub fn ttadapt_answer<G: Generator + ?Sized>(
    g: &mut G,
    inputs: &[AugmentedInput],
    gen_cfg: &GenerationConfig,
    cfg: &AdaptConfig,
) -> Result<AdaptOutcome> {
    cfg.validate()?;
    let snapshot = g
        .as_trainable()
        .ok_or(Error::UnsupportedCapability("trainable"))?
        .clone_weights()?;
    let result = adapt_loop(g, inputs, gen_cfg, cfg);
    let trainable = g
        .as_trainable()
        .ok_or(Error::UnsupportedCapability("trainable"))?;
    trainable.restore_weights(&snapshot)?;
    trainable.zero_grad();
    result
}

fn adapt_loop<G: Generator + ?Sized>(
    g: &mut G,
    inputs: &[AugmentedInput],
    gen_cfg: &GenerationConfig,
    cfg: &AdaptConfig,
) -> Result<AdaptOutcome> {
    let consensus = GenerationConfig {
        aggregation: Aggregation::Average,
        logit_space: false,
        ..gen_cfg.clone()
    };
    let mut pseudolabels = Vec::new();
    let mut losses = Vec::new();
    for iteration in 0..cfg.pseudo_iterations {
        let trace = ttaug_generate(&*g, inputs, &consensus)?;
        pseudolabels.push(trace.tokens.clone());
        if iteration + 1 == cfg.pseudo_iterations {
            return Ok(AdaptOutcome {
                trace,
                pseudolabels,
                losses,
            });
        }
        let model = g
            .as_trainable()
            .ok_or(Error::UnsupportedCapability("trainable"))?;
        losses.push(fine_tune(model, inputs, &trace.tokens, cfg)?);
    }
    unreachable!("pseudo_iterations >= 1 is validated")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{sequence_log_prob, ToyModel};

    fn m(rows: &[&[f64]]) -> StepMatrix {
        StepMatrix::from_probs(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let eps = 1e-12;
        let h = marginal_entropy(&[0.3, -1.0], &m(&[&[1.0, 0.0], &[1.0, 0.0]]), eps).unwrap();
        assert!(h.abs() <= 1e-11);
        let h = marginal_entropy(&[0.0, 0.0], &m(&[&[0.5, 0.5], &[0.5, 0.5]]), eps).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-9);
        let h = marginal_entropy(&[0.2, 0.2], &m(&[&[1.0, 0.0], &[0.0, 1.0]]), eps).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn gradient_vanishes_by_symmetry_and_for_one_row() {
        let g = entropy_gradient(&[0.5, 0.5], &m(&[&[1.0, 0.0], &[0.0, 1.0]]), 1e-12).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12));
        let g = entropy_gradient(&[0.7], &m(&[&[0.2, 0.8]]), 1e-12).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn weights_concentrate_on_the_deterministic_row() {
        let cfg = WeightOptConfig {
            micro_steps: 200,
            ..Default::default()
        };
        let s = optimize_step(&m(&[&[1.0, 0.0], &[0.5, 0.5]]), &cfg).unwrap();
        assert!(s.weights[0] > 0.9, "{:?}", s.weights);
        assert!(s.final_entropy < s.initial_entropy);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identical_rows_keep_uniform_weights() {
        let p: &[f64] = &[0.2, 0.3, 0.5];
        let w = optimize_weights(&[m(&[p, p, p])], &WeightOptConfig::default()).unwrap();
        assert!(w[0].iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    fn trainable_model() -> (ToyModel, Vec<AugmentedInput>) {
        let vocab: Vec<String> = ["<eos>", "a", "b"].iter().map(|s| s.to_string()).collect();
        let x0 = AugmentedInput::text("first view").unwrap();
        let x1 = AugmentedInput::text("second view").unwrap();
        let g = ToyModel::builder(vocab, "<eos>")
            .unwrap()
            .trainable(true)
            .input_row(&x0, &[], vec![0.1, 0.5, 0.4])
            .unwrap()
            .input_row(&x1, &[], vec![0.1, 0.3, 0.6])
            .unwrap()
            .input_row(&x0, &[2], vec![0.7, 0.2, 0.1])
            .unwrap()
            .input_row(&x1, &[2], vec![0.6, 0.3, 0.1])
            .unwrap()
            .build();
        (g, vec![x0, x1])
    }

    fn gen_cfg() -> GenerationConfig {
        GenerationConfig {
            n_aug: 2,
            max_tokens: 4,
            ..Default::default()
        }
    }

    #[test]
    fn single_iteration_equals_ttaug() {
        let (mut g, inputs) = trainable_model();
        let plain = ttaug_generate(&g, &inputs, &gen_cfg()).unwrap();
        let cfg = AdaptConfig {
            pseudo_iterations: 1,
            ..Default::default()
        };
        let out = ttadapt_answer(&mut g, &inputs, &gen_cfg(), &cfg).unwrap();
        assert_eq!(out.trace.tokens, plain.tokens);
        assert!(out.losses.is_empty());
    }

    #[test]
    fn weights_are_restored_bitwise() {
        let (mut g, inputs) = trainable_model();
        let before: Vec<_> = inputs.iter().map(|x| g.step(x, &[]).unwrap()).collect();
        let cfg = AdaptConfig {
            learning_rate: 0.5,
            ..Default::default()
        };
        let out = ttadapt_answer(&mut g, &inputs, &gen_cfg(), &cfg).unwrap();
        assert_eq!(out.pseudolabels.len(), 3);
        let after: Vec<_> = inputs.iter().map(|x| g.step(x, &[]).unwrap()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn fine_tuning_does_not_lower_pseudolabel_likelihood() {
        let (mut g, inputs) = trainable_model();
        let label = ttaug_generate(&g, &inputs, &gen_cfg()).unwrap().tokens;
        let ll = |g: &ToyModel| -> f64 {
            inputs.iter().map(|x| sequence_log_prob(g, x, &label).unwrap()).sum()
        };
        let before = ll(&g);
        let cfg = AdaptConfig::default();
        fine_tune(g.as_trainable().unwrap(), &inputs, &label, &cfg).unwrap();
        assert!(ll(&g) >= before);
    }

    #[test]
    fn untrainable_model_is_rejected() {
        let (g, inputs) = trainable_model();
        let mut frozen = ToyModel::builder(g.vocab().to_vec(), "<eos>").unwrap().build();
        let r = ttadapt_answer(&mut frozen, &inputs, &gen_cfg(), &AdaptConfig::default());
        assert!(matches!(r, Err(Error::UnsupportedCapability("trainable"))));
    }
}
