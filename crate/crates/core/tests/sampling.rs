mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::text_inputs;
use vlm_tts::baselines::{sample_token, temperature_sample};
use vlm_tts::decoder::greedy_generate;
use vlm_tts::generator::ToyModel;
use vlm_tts::types::GenerationConfig;

const SEEDS: u64 = 10_000;

fn frequencies(probs: &[f64], temperature: f64) -> Vec<f64> {
    let mut counts = vec![0.0; probs.len()];
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        counts[sample_token(probs, temperature, &mut rng) as usize] += 1.0;
    }
    counts.into_iter().map(|c| c / SEEDS as f64).collect()
}

fn tempered(probs: &[f64], temperature: f64) -> Vec<f64> {
    let w: Vec<f64> = probs.iter().map(|p| p.powf(1.0 / temperature)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

#[test]
fn empirical_frequencies_follow_the_tempered_distribution() {
    let probs = [0.5, 0.3, 0.15, 0.05];
    for t in [0.5, 1.0, 2.0] {
        let want = tempered(&probs, t);
        for (got, want) in frequencies(&probs, t).iter().zip(&want) {
            assert!((got - want).abs() < 0.02, "T={t}: {got} vs {want}");
        }
    }
}

#[test]
fn zero_probability_tokens_are_never_drawn() {
    let probs = [0.0, 0.7, 0.0, 0.3];
    let f = frequencies(&probs, 1.0);
    assert_eq!((f[0], f[2]), (0.0, 0.0));
}

fn model() -> ToyModel {
    let vocab: Vec<String> = ["<eos>", "a", "b"].iter().map(|s| s.to_string()).collect();
    ToyModel::builder(vocab, "<eos>")
        .unwrap()
        .row("q", 0, &[], vec![0.05, 0.6, 0.35])
        .unwrap()
        .row("q", 0, &[1], vec![0.9, 0.05, 0.05])
        .unwrap()
        .row("q", 0, &[2], vec![0.9, 0.05, 0.05])
        .unwrap()
        .build()
}

#[test]
fn sequence_sampling_matches_first_step_probabilities() {
    let g = model();
    let x = &text_inputs(&["q"])[0];
    let cfg = GenerationConfig {
        n_aug: 1,
        max_tokens: 2,
        ..Default::default()
    };
    let mut first = [0.0; 3];
    for seed in 0..SEEDS {
        let s = temperature_sample(&g, x, 1.0, &cfg, seed).unwrap();
        first[s.trace.tokens[0] as usize] += 1.0 / SEEDS as f64;
        let lp: f64 = s.token_log_probs.iter().sum();
        assert!(lp <= 0.0 && s.token_log_probs.len() == s.trace.tokens.len());
    }
    for (got, want) in first.iter().zip([0.05, 0.6, 0.35]) {
        assert!((got - want).abs() < 0.02, "{got} vs {want}");
    }
}

#[test]
fn tiny_temperature_is_greedy() {
    let g = model();
    let x = &text_inputs(&["q"])[0];
    let cfg = GenerationConfig {
        n_aug: 1,
        max_tokens: 2,
        ..Default::default()
    };
    let greedy = greedy_generate(&g, x, &cfg).unwrap();
    for seed in 0..200 {
        assert_eq!(temperature_sample(&g, x, 1e-6, &cfg, seed).unwrap().trace.tokens, greedy.tokens);
    }
}
