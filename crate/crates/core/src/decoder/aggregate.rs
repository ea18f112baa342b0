//! Token-level aggregation rules over one generation step.

use crate::error::{Error, Result};
use crate::types::{argmax, validate_distribution, TokenDistribution, TokenId};

/// The `N` branch distributions of one generation step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMatrix {
    rows: Vec<TokenDistribution>,
}

impl StepMatrix {
    pub fn new(rows: Vec<TokenDistribution>) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyMatrix)?;
        let expected = first.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != expected) {
            return Err(Error::RaggedMatrix {
                expected,
                actual: bad.len(),
            });
        }
        Ok(Self { rows })
    }

    /// Validates each row as a distribution first.
    pub fn from_probs(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            rows.into_iter()
                .map(validate_distribution)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn rows(&self) -> &[TokenDistribution] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.rows[0].len()
    }
}

/// Mean of equal-length vectors, computed as `x₀ + Σ (xᵢ - x₀) / N` so that
/// identical inputs reproduce `x₀` bit for bit.
pub fn mean_vectors<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut iter = vectors.into_iter();
    let Some(first) = iter.next() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.len()];
    let mut n = 1usize;
    for v in iter {
        for ((a, x), x0) in acc.iter_mut().zip(v).zip(first) {
            *a += x - x0;
        }
        n += 1;
    }
    first
        .iter()
        .zip(&acc)
        .map(|(x0, a)| x0 + a / n as f64)
        .collect()
}

/// `Σᵢ wᵢ · vᵢ`.
pub fn weighted_sum<'a>(vectors: impl IntoIterator<Item = &'a [f64]>, weights: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for (v, &w) in vectors.into_iter().zip(weights) {
        if out.is_empty() {
            out = vec![0.0; v.len()];
        }
        out.iter_mut().zip(v).for_each(|(o, x)| *o += w * x);
    }
    out
}

/// Softmax over negative branch entropies.
pub fn entropy_weights(m: &StepMatrix) -> Vec<f64> {
    let neg_h: Vec<f64> = m.rows().iter().map(|r| -r.entropy()).collect();
    softmax(&neg_h)
}

pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Arithmetic mean of the branch distributions.
pub fn aggregate_average(m: &StepMatrix) -> Result<TokenDistribution> {
    validate_distribution(mean_vectors(m.rows().iter().map(|r| r.probs())))
}

/// Mixture weighted by `wᵢ ∝ exp(-Hᵢ)`, with entropies in nats.
pub fn aggregate_entropy_weighted(m: &StepMatrix) -> Result<TokenDistribution> {
    let w = entropy_weights(m);
    aggregate_weighted(m, &w)
}

/// Mixture with caller-supplied weights on the simplex.
pub fn aggregate_weighted(m: &StepMatrix, weights: &[f64]) -> Result<TokenDistribution> {
    if weights.len() != m.n() {
        return Err(Error::DimensionMismatch {
            expected: m.n(),
            actual: weights.len(),
        });
    }
    validate_distribution(weighted_sum(m.rows().iter().map(|r| r.probs()), weights))
}

/// Token with the most branch argmax votes; the lowest index wins ties.
pub fn aggregate_majority(m: &StepMatrix) -> TokenId {
    let mut votes = vec![0.0; m.vocab_size()];
    for r in m.rows() {
        votes[r.argmax() as usize] += 1.0;
    }
    argmax(&votes) as TokenId
}

/// Token holding the single largest probability across all branches.
pub fn aggregate_most_confident(m: &StepMatrix) -> TokenId {
    let mut best_token = 0usize;
    let mut best = f64::NEG_INFINITY;
    for r in m.rows() {
        for (v, &p) in r.probs().iter().enumerate() {
            if p > best || (p == best && v < best_token) {
                best = p;
                best_token = v;
            }
        }
    }
    best_token as TokenId
}

/// Normalized geometric mean, i.e. averaging in log-probability space.
pub fn aggregate_log_space(m: &StepMatrix) -> Result<TokenDistribution> {
    const FLOOR: f64 = 1e-300;
    let logs: Vec<Vec<f64>> = m
        .rows()
        .iter()
        .map(|r| r.probs().iter().map(|&p| p.max(FLOOR).ln()).collect())
        .collect();
    let mean = mean_vectors(logs.iter().map(Vec::as_slice));
    validate_distribution(softmax(&mean))
}
