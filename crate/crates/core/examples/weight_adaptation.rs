//! Per-step aggregation weights found by minimizing the mixture's entropy.

use vlm_tts::adapt::{optimize_step, ttadapt_weights_generate, WeightOptConfig};
use vlm_tts::decoder::{DecodeOptions, StepMatrix};
use vlm_tts::generator::ToyModel;
use vlm_tts::types::{AugmentedInput, GenerationConfig};

fn main() -> vlm_tts::Result<()> {
    let m = StepMatrix::from_probs(vec![vec![1.0, 0.0], vec![0.5, 0.5]])?;
    let cfg = WeightOptConfig {
        micro_steps: 200,
        ..Default::default()
    };
    let s = optimize_step(&m, &cfg)?;
    println!("weights {:.3?}, entropy {:.4} -> {:.4}", s.weights, s.initial_entropy, s.final_entropy);

    let vocab: Vec<String> = ["<eos>", "cat", "dog"].iter().map(|s| s.to_string()).collect();
    let views = [
        AugmentedInput::new("q", 0, "Which animal is shown?", None)?,
        AugmentedInput::new("q", 1, "Which animal is shwon? In other words, Which animal is shown?", None)?,
        AugmentedInput::new("q", 2, "Wihch animal is shown? In other words, Which animal is shown?", None)?,
    ];
    let g = ToyModel::builder(vocab, "<eos>")?
        .input_row(&views[0], &[], vec![0.0, 0.98, 0.02])?
        .input_row(&views[1], &[], vec![0.0, 0.30, 0.70])?
        .input_row(&views[2], &[], vec![0.0, 0.35, 0.65])?
        .build();
    let gen = GenerationConfig {
        n_aug: 3,
        max_tokens: 1,
        ..Default::default()
    };
    let t = ttadapt_weights_generate(&g, &views, &gen, &WeightOptConfig::default(), DecodeOptions::recording(Default::default()))?;
    println!("adapted first token {:?}, mixture {:.3?}", t.tokens, t.aggregated_distributions.unwrap()[0].probs());
    Ok(())
}
