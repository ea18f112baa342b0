//! Prompt augmentation: classical character/word/sentence perturbations,
//! consistency enforcement and sentence-wise self-paraphrasing.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::Deserialize;

use crate::baselines::sample_token;
use crate::error::{Error, Result};
use crate::generator::text::detokenize;
use crate::generator::Generator;
use crate::types::{AugmentedInput, TokenId};

pub const PARAPHRASE_TEMPLATE: &str = include_str!("../resources/prompts/paraphrase.txt");

/// Attempts per sentence before giving up on the paraphraser.
pub const PARAPHRASE_ATTEMPTS: usize = 3;

const CONSISTENCY_JOINER: &str = " In other words, ";

// Rows of a QWERTY keyboard; each row is offset half a key to the right of
// the one above it.
const KEY_ROWS: [&str; 4] = ["1234567890", "qwertyuiop", "asdfghjkl", "zxcvbnm"];

/// Keys one step away from `key` (lowercase letter or digit): left and right
/// on the same row, the two keys touching it on the rows above and below.
pub fn keyboard_neighbors(key: char) -> Vec<char> {
    let rows: Vec<Vec<char>> = KEY_ROWS.iter().map(|r| r.chars().collect()).collect();
    let Some((r, c)) = rows
        .iter()
        .enumerate()
        .find_map(|(r, row)| row.iter().position(|&k| k == key).map(|c| (r, c)))
    else {
        return Vec::new();
    };
    let at = |r: usize, c: isize| -> Option<char> {
        (c >= 0).then(|| rows[r].get(c as usize).copied()).flatten()
    };
    let c = c as isize;
    let mut out = Vec::new();
    out.extend(at(r, c - 1));
    out.extend(at(r, c + 1));
    if r > 0 {
        out.extend(at(r - 1, c));
        out.extend(at(r - 1, c + 1));
    }
    if r + 1 < rows.len() {
        out.extend(at(r + 1, c - 1));
        out.extend(at(r + 1, c));
    }
    out
}

/// Replaces each ASCII letter or digit with probability `rate` by a
/// neighbouring key, keeping its case.
pub fn keyboard_error(text: &str, rate: f64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    text.chars()
        .map(|ch| {
            if !ch.is_ascii_alphanumeric() || !rng.random_bool(rate.clamp(0.0, 1.0)) {
                return ch;
            }
            let neighbors = keyboard_neighbors(ch.to_ascii_lowercase());
            let pick = neighbors[rng.random_range(0..neighbors.len())];
            if ch.is_ascii_uppercase() {
                pick.to_ascii_uppercase()
            } else {
                pick
            }
        })
        .collect()
}

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\S+").unwrap());
static SENTENCE_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.!?]\s+").unwrap());

/// Inserts one space inside a uniformly chosen word of at least four characters.
pub fn word_split(text: &str, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<_> = WORD
        .find_iter(text)
        .filter(|m| m.as_str().chars().count() >= 4)
        .collect();
    if words.is_empty() {
        return text.to_string();
    }
    let w = words[rng.random_range(0..words.len())];
    let len = w.as_str().chars().count();
    let cut = rng.random_range(1..len);
    let offset = w.start() + w.as_str().char_indices().nth(cut).map(|(i, _)| i).unwrap();
    format!("{} {}", &text[..offset], &text[offset..])
}

/// Removes one uniformly chosen word when there are at least three.
pub fn word_delete(text: &str, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words: Vec<&str> = text.split_whitespace().collect();
    if words.len() < 3 {
        return text.to_string();
    }
    words.remove(rng.random_range(0..words.len()));
    words.join(" ")
}

/// Splits after `.`, `!` or `?` followed by whitespace, keeping terminators.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    for m in SENTENCE_END.find_iter(text) {
        out.push(text[start..m.start() + 1].trim().to_string());
        start = m.end();
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out.retain(|s| !s.is_empty());
    out
}

/// Swaps one uniformly chosen pair of adjacent sentences.
pub fn sentence_reorder(text: &str, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = split_sentences(text);
    if sentences.len() < 2 {
        return text.to_string();
    }
    let i = rng.random_range(0..sentences.len() - 1);
    sentences.swap(i, i + 1);
    sentences.join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalConfig {
    pub keyboard_rate: f64,
    pub inclusion_prob: f64,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            keyboard_rate: 0.05,
            inclusion_prob: 0.5,
        }
    }
}

/// The four classical operators in a seeded random order, each included
/// independently with `cfg.inclusion_prob`.
pub fn classical_text_pipeline_with(text: &str, seed: u64, cfg: &ClassicalConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = [0usize, 1, 2, 3];
    order.shuffle(&mut rng);
    let mut out = text.to_string();
    for op in order {
        let include = rng.random_bool(cfg.inclusion_prob);
        let op_seed: u64 = rng.random();
        if !include {
            continue;
        }
        out = match op {
            0 => keyboard_error(&out, cfg.keyboard_rate, op_seed),
            1 => word_split(&out, op_seed),
            2 => word_delete(&out, op_seed),
            _ => sentence_reorder(&out, op_seed),
        };
    }
    out
}

pub fn classical_text_pipeline(text: &str, seed: u64) -> String {
    classical_text_pipeline_with(text, seed, &ClassicalConfig::default())
}

/// `augmented + " In other words, " + original`.
pub fn enforce_consistency(augmented: &str, original: &str) -> String {
    format!("{augmented}{CONSISTENCY_JOINER}{original}")
}

/// Anything that completes a paraphrase request. `attempt` counts retries
/// from zero so stochastic paraphrasers can vary their output.
pub trait Paraphraser {
    fn complete(&self, request: &str, attempt: usize) -> Result<String>;
}

impl<F: Fn(&str, usize) -> Result<String>> Paraphraser for F {
    fn complete(&self, request: &str, attempt: usize) -> Result<String> {
        self(request, attempt)
    }
}

/// Uses a generator as its own paraphraser: greedy decoding on the first
/// attempt, seeded temperature sampling on retries.
pub struct GeneratorParaphraser<'a, G: Generator + ?Sized> {
    pub generator: &'a G,
    pub eos: TokenId,
    pub max_tokens: usize,
    pub retry_temperature: f64,
    pub seed: u64,
}

impl<G: Generator + ?Sized> Paraphraser for GeneratorParaphraser<'_, G> {
    fn complete(&self, request: &str, attempt: usize) -> Result<String> {
        let input = AugmentedInput::text(request)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(attempt as u64));
        let mut tokens = Vec::new();
        while tokens.len() < self.max_tokens {
            let dist = self.generator.step(&input, &tokens)?;
            let t = if attempt == 0 {
                dist.argmax()
            } else {
                sample_token(dist.probs(), self.retry_temperature, &mut rng)
            };
            tokens.push(t);
            if t == self.eos {
                break;
            }
        }
        Ok(detokenize(self.generator.vocab(), &tokens, Some(self.eos)))
    }
}

pub fn render_paraphrase_request(sentence: &str, n_aug: usize) -> String {
    format!("{}{sentence}", PARAPHRASE_TEMPLATE.replace("{n_aug}", &n_aug.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParaphraseResponse {
    paraphrases: Vec<String>,
}

/// Parses `{"paraphrases": [...]}` holding exactly `n` non-empty strings.
pub fn parse_paraphrases(raw: &str, n: usize) -> std::result::Result<Vec<String>, String> {
    let parsed: ParaphraseResponse = serde_json::from_str(raw.trim()).map_err(|e| e.to_string())?;
    if parsed.paraphrases.len() != n {
        return Err(format!("expected {n} paraphrases, got {}", parsed.paraphrases.len()));
    }
    if parsed.paraphrases.iter().any(|p| p.trim().is_empty()) {
        return Err("empty paraphrase".into());
    }
    Ok(parsed.paraphrases)
}

fn paraphrase_sentence(p: &dyn Paraphraser, sentence: &str, n_aug: usize) -> Result<Vec<String>> {
    let request = render_paraphrase_request(sentence, n_aug);
    let mut last = String::new();
    for attempt in 0..PARAPHRASE_ATTEMPTS {
        let raw = p.complete(&request, attempt)?;
        match parse_paraphrases(&raw, n_aug) {
            Ok(v) => return Ok(v),
            Err(e) => last = e,
        }
    }
    Err(Error::ParaphraserSchemaViolation {
        attempts: PARAPHRASE_ATTEMPTS,
        last,
    })
}

/// Paraphrases each sentence `n_aug` ways and returns `n_aug` prompts
/// sampled from the Cartesian product of the per-sentence sets. Distinct
/// combinations are drawn while the product is large enough, in
/// lexicographic order of the chosen indices.
pub fn self_paraphrase(
    paraphraser: &dyn Paraphraser,
    prompt: &str,
    n_aug: usize,
    seed: u64,
) -> Result<Vec<String>> {
    if n_aug == 0 {
        return Err(Error::invalid("n_aug must be >= 1"));
    }
    let sentences = split_sentences(prompt);
    if sentences.is_empty() {
        return Err(Error::invalid("cannot paraphrase an empty prompt"));
    }
    let mut sets = Vec::with_capacity(sentences.len());
    for s in &sentences {
        let mut unique: Vec<String> = Vec::new();
        for p in paraphrase_sentence(paraphraser, s, n_aug)? {
            if !unique.contains(&p) {
                unique.push(p);
            }
        }
        sets.push(unique);
    }
    let product = sets
        .iter()
        .try_fold(1usize, |acc, s| acc.checked_mul(s.len()))
        .unwrap_or(usize::MAX);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        sets.iter().map(|s| rng.random_range(0..s.len())).collect()
    };
    let combos: Vec<Vec<usize>> = if product >= n_aug {
        let mut chosen = BTreeSet::new();
        while chosen.len() < n_aug {
            chosen.insert(draw(&mut rng));
        }
        chosen.into_iter().collect()
    } else {
        (0..n_aug).map(|_| draw(&mut rng)).collect()
    };
    Ok(combos
        .into_iter()
        .map(|idx| {
            idx.iter()
                .zip(&sets)
                .map(|(&i, s)| s[i].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect())
}
