//! The autoregressive generator contract.
//!
//! A [`Generator`] maps an augmented input and a shared token prefix to a
//! next-token distribution. Generators that expose hidden states support
//! early-layer aggregation, and [`Trainable`] generators support test-time
//! parameter adaptation. Two implementations ship with the crate: the
//! deterministic [`ToyModel`] used for desk-scale experiments and the
//! [`RemoteGenerator`] client for attaching an out-of-process model.

use std::any::Any;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AugmentedInput, TokenDistribution, TokenId};

pub mod remote;
pub mod text;
pub mod toy;

pub use remote::{RemoteConfig, RemoteGenerator};
pub use toy::{ImageMatch, PromptMatch, ToyModel, ToyModelBuilder, ToyModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    pub hidden_states: bool,
    pub trainable: bool,
}

pub trait Generator: Send + Sync {
    /// Token strings, indexed by token id.
    fn vocab(&self) -> &[String];

    fn vocab_size(&self) -> usize {
        self.vocab().len()
    }

    /// Number of transformer layers `L`.
    fn num_layers(&self) -> usize;

    fn capabilities(&self) -> Capabilities;

    /// Longest prefix the generator accepts.
    fn context_limit(&self) -> usize;

    fn eos_token(&self) -> Option<TokenId> {
        None
    }

    /// Next-token distribution for `input` continued by `prefix`.
    fn step(&self, input: &AugmentedInput, prefix: &[TokenId]) -> Result<TokenDistribution>;

    /// Hidden state after layer `layer` (1-based) at the last position.
    fn step_hidden(
        &self,
        _input: &AugmentedInput,
        _prefix: &[TokenId],
        _layer: usize,
    ) -> Result<Vec<f64>> {
        Err(Error::UnsupportedCapability("hidden_states"))
    }

    /// Runs layers `layer + 1 ..= L` and the output head on `hidden`.
    fn resume_from_hidden(&self, _hidden: &[f64], _layer: usize) -> Result<TokenDistribution> {
        Err(Error::UnsupportedCapability("hidden_states"))
    }

    fn as_trainable(&mut self) -> Option<&mut dyn Trainable> {
        None
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn vocab(&self) -> &[String] {
        (**self).vocab()
    }
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn num_layers(&self) -> usize {
        (**self).num_layers()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn context_limit(&self) -> usize {
        (**self).context_limit()
    }
    fn eos_token(&self) -> Option<TokenId> {
        (**self).eos_token()
    }
    fn step(&self, input: &AugmentedInput, prefix: &[TokenId]) -> Result<TokenDistribution> {
        (**self).step(input, prefix)
    }
    fn step_hidden(
        &self,
        input: &AugmentedInput,
        prefix: &[TokenId],
        layer: usize,
    ) -> Result<Vec<f64>> {
        (**self).step_hidden(input, prefix, layer)
    }
    fn resume_from_hidden(&self, hidden: &[f64], layer: usize) -> Result<TokenDistribution> {
        (**self).resume_from_hidden(hidden, layer)
    }
    fn as_trainable(&mut self) -> Option<&mut dyn Trainable> {
        (**self).as_trainable()
    }
}

pub(crate) fn check_layer(layer: usize, num_layers: usize) -> Result<()> {
    if layer == 0 || layer > num_layers {
        return Err(Error::LayerOutOfRange { layer, num_layers });
    }
    Ok(())
}

/// Opaque copy of a trainable generator's parameters.
#[derive(Clone)]
pub struct WeightSnapshot {
    pub(crate) owner: u64,
    pub(crate) state: Arc<dyn Any + Send + Sync>,
}

impl std::fmt::Debug for WeightSnapshot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeightSnapshot")
            .field("owner", &self.owner)
            .finish_non_exhaustive()
    }
}

/// One supervised pair: an input and the token sequence it should produce.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub input: AugmentedInput,
    pub target: Vec<TokenId>,
}

/// A mutable view of one parameter tensor and its accumulated gradient.
pub struct ParamSlot<'a> {
    /// Stable key, used by optimizers to keep per-tensor state.
    pub key: u64,
    pub values: &'a mut [f64],
    pub grads: &'a [f64],
}

pub trait Trainable {
    /// Copies the current parameters and remembers the copy as the latest snapshot.
    fn clone_weights(&mut self) -> Result<WeightSnapshot>;

    fn restore_weights(&mut self, snapshot: &WeightSnapshot) -> Result<()>;

    /// Restores the most recent snapshot taken with [`Trainable::clone_weights`].
    fn restore_latest(&mut self) -> Result<()>;

    fn zero_grad(&mut self);

    /// Adds `scale * ∇` of the example's mean token cross-entropy to the
    /// gradient buffers and returns that loss.
    fn accumulate_gradient(&mut self, example: &TrainingExample, scale: f64) -> Result<f64>;

    fn parameters(&mut self) -> Vec<ParamSlot<'_>>;
}

/// Sum of `ln p(target_j | input, target_<j)` under teacher forcing.
pub fn sequence_log_prob<G: Generator + ?Sized>(
    g: &G,
    input: &AugmentedInput,
    target: &[TokenId],
) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..target.len() {
        let dist = g.step(input, &target[..j])?;
        total += dist.get(target[j]).ln();
    }
    Ok(total)
}
