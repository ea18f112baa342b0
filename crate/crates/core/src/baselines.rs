//! Sampling-based diversity and the answer-level aggregation strategies:
//! majority voting, ranking by sequence likelihood, self-selection and
//! self-synthesis.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoder::greedy_generate;
use crate::error::{Error, Result};
use crate::evalkit::normalize_text;
use crate::generator::text::detokenize;
use crate::generator::Generator;
use crate::types::{argmax, AugmentedInput, GenerationConfig, GenerationTrace, TokenId};

pub const SELECTOR_TEMPLATE: &str = include_str!("../resources/prompts/self_selector.txt");
pub const SYNTHESIZER_TEMPLATE: &str = include_str!("../resources/prompts/self_synthesizer.txt");

/// A sampled sequence and the model log-probability of each token.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub trace: GenerationTrace,
    pub token_log_probs: Vec<f64>,
}

/// Draws from `softmax(ln p / temperature)`. Very small temperatures
/// collapse onto the argmax.
pub fn sample_token(probs: &[f64], temperature: f64, rng: &mut impl Rng) -> TokenId {
    let scaled: Vec<f64> = probs.iter().map(|p| p.ln() / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = argmax(&weights);
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i as TokenId;
            }
        }
    }
    last_positive as TokenId
}

/// Autoregressive sampling at `temperature`, seeded.
pub fn temperature_sample<G: Generator + ?Sized>(
    g: &G,
    input: &AugmentedInput,
    temperature: f64,
    cfg: &GenerationConfig,
    seed: u64,
) -> Result<Sample> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid("temperature must be positive"));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens = Vec::new();
    let mut log_probs = Vec::new();
    while tokens.len() < cfg.max_tokens {
        let dist = g.step(input, &tokens)?;
        let token = sample_token(dist.probs(), temperature, &mut rng);
        log_probs.push(dist.get(token).ln());
        tokens.push(token);
        if token == cfg.eos_token {
            break;
        }
    }
    Ok(Sample {
        trace: GenerationTrace {
            tokens,
            per_step_distributions: None,
            aggregated_distributions: None,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        token_log_probs: log_probs,
    })
}

/// Most frequent answer after normalization; the earliest wins ties.
pub fn self_consistency(answers: &[String]) -> Result<String> {
    if answers.is_empty() {
        return Err(Error::invalid("self-consistency needs at least one answer"));
    }
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    for (i, a) in answers.iter().enumerate() {
        counts.entry(normalize_text(a)).or_insert((0, i)).0 += 1;
    }
    let (best, _) = counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .expect("non-empty");
    Ok(best)
}

/// Candidate with the largest summed log-probability; the earliest wins ties.
pub fn sample_and_rank(candidates: &[(String, Vec<f64>)]) -> Result<String> {
    if candidates.is_empty() || candidates.iter().any(|(_, lp)| lp.is_empty()) {
        return Err(Error::invalid(
            "sample-and-rank needs candidates with at least one token each",
        ));
    }
    let totals: Vec<f64> = candidates.iter().map(|(_, lp)| lp.iter().sum()).collect();
    Ok(candidates[argmax(&totals)].0.clone())
}

/// `0: first\n1: second\n...`.
pub fn render_candidates(candidates: &[String]) -> String {
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{i}: {c}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_selector_prompt(question: &str, candidates: &[String]) -> String {
    SELECTOR_TEMPLATE
        .replace("{input_question}", question)
        .replace("{responses}", &render_candidates(candidates))
        .replace("{n_aug}", &candidates.len().saturating_sub(1).to_string())
}

pub fn render_synthesizer_prompt(question: &str, candidates: &[String]) -> String {
    SYNTHESIZER_TEMPLATE
        .replace("{input_question}", question)
        .replace("{responses}", &render_candidates(candidates))
}

/// Whether `s` splits into a sequence of non-empty vocabulary strings.
fn segmentable(s: &str, vocab: &[String]) -> bool {
    let mut reach = vec![false; s.len() + 1];
    reach[0] = true;
    for i in 0..s.len() {
        if !reach[i] || !s.is_char_boundary(i) {
            continue;
        }
        for t in vocab.iter().filter(|t| !t.is_empty()) {
            if s[i..].starts_with(t.as_str()) {
                reach[i + t.len()] = true;
            }
        }
    }
    reach[s.len()]
}

/// Greedy decoding restricted to the decimal strings `"0"` to `"{max}"`.
/// A token is admissible when the text so far plus the token can still be
/// completed to one of them; EOS is admissible once the text is complete.
pub fn constrained_integer_decode<G: Generator + ?Sized>(
    g: &G,
    input: &AugmentedInput,
    max: usize,
    eos: TokenId,
) -> Result<usize> {
    let vocab = g.vocab();
    let targets: Vec<String> = (0..=max)
        .map(|i| i.to_string())
        .filter(|s| segmentable(s, vocab))
        .collect();
    if targets.is_empty() {
        return Err(Error::ConstraintUnsatisfiable { max });
    }
    let completable =
        |text: &str| targets.iter().any(|s| s.strip_prefix(text).is_some_and(|r| segmentable(r, vocab)));
    let mut text = String::new();
    let mut tokens: Vec<TokenId> = Vec::new();
    loop {
        let complete = targets.iter().any(|s| s == &text);
        let allowed: Vec<usize> = (0..vocab.len())
            .filter(|&t| {
                if t as TokenId == eos {
                    complete
                } else {
                    !vocab[t].is_empty() && completable(&format!("{text}{}", vocab[t]))
                }
            })
            .collect();
        if allowed.is_empty() {
            break;
        }
        let dist = g.step(input, &tokens)?;
        let best = allowed
            .iter()
            .copied()
            .fold(allowed[0], |b, t| if dist.probs()[t] > dist.probs()[b] { t } else { b });
        if best as TokenId == eos {
            break;
        }
        text.push_str(&vocab[best]);
        tokens.push(best as TokenId);
    }
    text.parse()
        .map_err(|_| Error::ConstraintUnsatisfiable { max })
}

/// Asks the model which candidate is best. A single candidate is returned
/// without querying the model.
pub fn self_select<G: Generator + ?Sized>(
    g: &G,
    question: &AugmentedInput,
    candidates: &[String],
    eos: TokenId,
) -> Result<usize> {
    match candidates.len() {
        0 => Err(Error::invalid("self-select needs at least one candidate")),
        1 => Ok(0),
        n => {
            let prompt = render_selector_prompt(question.prompt(), candidates);
            let input = question.with_prompt(prompt)?;
            constrained_integer_decode(g, &input, n - 1, eos)
        }
    }
}

/// Asks the model to merge the candidates into one answer, decoded greedily.
pub fn self_synthesize<G: Generator + ?Sized>(
    g: &G,
    question: &AugmentedInput,
    candidates: &[String],
    cfg: &GenerationConfig,
) -> Result<String> {
    if candidates.is_empty() {
        return Err(Error::invalid("self-synthesize needs at least one candidate"));
    }
    let prompt = render_synthesizer_prompt(question.prompt(), candidates);
    let input = question.with_prompt(prompt)?;
    let trace = greedy_generate(g, &input, cfg)?;
    Ok(detokenize(g.vocab(), &trace.tokens, Some(cfg.eos_token))
        .trim()
        .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::ToyModel;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn voting() {
        assert_eq!(self_consistency(&s(&["A", "B", "A"])).unwrap(), "a");
        assert_eq!(self_consistency(&s(&["a ", "A"])).unwrap(), "a");
        assert_eq!(self_consistency(&s(&["x", "y"])).unwrap(), "x");
        assert!(self_consistency(&[]).is_err());
    }

    #[test]
    fn ranking() {
        let c = |t: &str, lp: &[f64]| (t.to_string(), lp.to_vec());
        assert_eq!(sample_and_rank(&[c("a", &[-5.0]), c("b", &[-3.2])]).unwrap(), "b");
        assert_eq!(sample_and_rank(&[c("only", &[-9.0])]).unwrap(), "only");
        assert_eq!(sample_and_rank(&[c("ab", &[-1.0, -1.0]), c("c", &[-2.5])]).unwrap(), "ab");
        assert_eq!(sample_and_rank(&[c("p", &[-1.0]), c("q", &[-1.0])]).unwrap(), "p");
    }

    #[test]
    fn templates_render_verbatim() {
        let p = render_selector_prompt("What is it?", &s(&["cat", ""]));
        assert_eq!(
            p,
            "\"What is it?\"\n\nDifferent people answered this question in different ways. \
             Select the best response from these candidate answers:\n\n0: cat\n1: \n\n\
             Just return the index of the best response. Return an integer between 0 and 1."
        );
        let p = render_synthesizer_prompt("Q", &s(&["x", "y"]));
        assert!(p.ends_with("0: x\n1: y\n\nJust return the final answer."));
    }

    fn digits_model() -> ToyModel {
        let vocab = s(&["<eos>", "0", "1", "2", "x"]);
        ToyModel::builder(vocab, "<eos>")
            .unwrap()
            .rule(crate::generator::PromptMatch::Any, Default::default(), &[], vec![0.1, 0.1, 0.1, 0.2, 0.5])
            .unwrap()
            .build()
    }

    #[test]
    fn selection_stays_in_range() {
        let g = digits_model();
        let q = AugmentedInput::text("Which?").unwrap();
        // "2" is the most likely in-range token for three candidates.
        assert_eq!(self_select(&g, &q, &s(&["a", "b", "c"]), 0).unwrap(), 2);
        // With two candidates "2" is masked; "0" and "1" tie and the lower id wins.
        assert_eq!(self_select(&g, &q, &s(&["a", "b"]), 0).unwrap(), 0);
        assert_eq!(self_select(&g, &q, &s(&["a"]), 0).unwrap(), 0);
    }

    #[test]
    fn unsatisfiable_vocabulary() {
        let g = ToyModel::builder(s(&["<eos>", "x"]), "<eos>").unwrap().build();
        let q = AugmentedInput::text("Which?").unwrap();
        assert!(matches!(
            self_select(&g, &q, &s(&["a", "b"]), 0),
            Err(Error::ConstraintUnsatisfiable { max: 1 })
        ));
    }

    #[test]
    fn near_zero_temperature_is_greedy() {
        // No exact ties anywhere along the greedy path.
        let g = ToyModel::builder(s(&["<eos>", "0", "1", "2", "x"]), "<eos>")
            .unwrap()
            .rule(crate::generator::PromptMatch::Any, Default::default(), &[], vec![0.1, 0.1, 0.1, 0.2, 0.5])
            .unwrap()
            .rule(crate::generator::PromptMatch::Any, Default::default(), &[4], vec![0.15, 0.1, 0.4, 0.3, 0.05])
            .unwrap()
            .rule(crate::generator::PromptMatch::Any, Default::default(), &[4, 2], vec![0.7, 0.1, 0.1, 0.05, 0.05])
            .unwrap()
            .build();
        let q = AugmentedInput::text("go").unwrap();
        let cfg = GenerationConfig { n_aug: 1, max_tokens: 4, ..Default::default() };
        let greedy = greedy_generate(&g, &q, &cfg).unwrap();
        for seed in 0..20 {
            let sampled = temperature_sample(&g, &q, 1e-6, &cfg, seed).unwrap();
            assert_eq!(sampled.trace.tokens, greedy.tokens);
        }
        let a = temperature_sample(&g, &q, 1.0, &cfg, 9).unwrap();
        let b = temperature_sample(&g, &q, 1.0, &cfg, 9).unwrap();
        assert_eq!(a, Sample { trace: GenerationTrace { wall_time_s: a.trace.wall_time_s, ..b.trace.clone() }, ..b });
    }
}
