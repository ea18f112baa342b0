//! Builds the `N` augmented inputs for one question.
//!
//! With a single branch, or with augmentation switched off, the question is
//! passed through untouched. Otherwise every branch is augmented: text-only
//! augmentation keeps the image fixed, image-only keeps the prompt fixed and
//! `both` varies each independently.

use std::sync::Arc;

use image::RgbImage;

use crate::error::Result;
use crate::imageaug::apply_image_aug;
use crate::textaug::{classical_text_pipeline, enforce_consistency, self_paraphrase, Paraphraser};
use crate::types::{derive_seed, AugmentedInput, GenerationConfig, Modality, TextStrategy};

/// The unmodified question.
pub fn original_input(id: &str, prompt: &str, image: Option<Arc<RgbImage>>) -> Result<AugmentedInput> {
    AugmentedInput::new(id, 0, prompt, image)
}

/// Number of branches actually decoded under `cfg`.
pub fn branch_count(cfg: &GenerationConfig) -> usize {
    if cfg.modality == Modality::None {
        1
    } else {
        cfg.n_aug
    }
}

/// Augmented prompts for `n` branches.
pub fn augment_prompts(
    prompt: &str,
    n: usize,
    cfg: &GenerationConfig,
    paraphraser: Option<&dyn Paraphraser>,
    seed: u64,
) -> Result<Vec<String>> {
    let raw = match (cfg.text_strategy, paraphraser) {
        (TextStrategy::SelfParaphrase, Some(p)) => self_paraphrase(p, prompt, n, derive_seed(seed, "paraphrase"))?,
        (TextStrategy::SelfParaphrase, None) => {
            return Err(crate::Error::invalid("self-paraphrasing needs a paraphraser"))
        }
        (TextStrategy::Classical, _) => (0..n)
            .map(|i| classical_text_pipeline(prompt, derive_seed(seed, &format!("text/{i}"))))
            .collect(),
    };
    Ok(raw
        .into_iter()
        .map(|t| {
            if cfg.consistency_enforcement {
                enforce_consistency(&t, prompt)
            } else if t.trim().is_empty() {
                // Every operator deleted everything; fall back to the question.
                prompt.to_string()
            } else {
                t
            }
        })
        .collect())
}

/// Builds the branch inputs for one question. `seed` should already be
/// specific to the question.
pub fn build_inputs(
    id: &str,
    prompt: &str,
    image: Option<Arc<RgbImage>>,
    cfg: &GenerationConfig,
    paraphraser: Option<&dyn Paraphraser>,
    seed: u64,
) -> Result<Vec<AugmentedInput>> {
    let n = branch_count(cfg);
    if n == 1 {
        return Ok(vec![original_input(id, prompt, image)?]);
    }
    let prompts = if cfg.modality.augments_text() {
        augment_prompts(prompt, n, cfg, paraphraser, seed)?
    } else {
        vec![prompt.to_string(); n]
    };
    prompts
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let img = match image.as_deref() {
                Some(img) if cfg.modality.augments_image() => Some(Arc::new(apply_image_aug(
                    img,
                    cfg.image_strength,
                    derive_seed(seed, &format!("image/{i}")),
                )?)),
                _ => image.clone(),
            };
            AugmentedInput::new(id, i, p, img)
        })
        .collect()
}
