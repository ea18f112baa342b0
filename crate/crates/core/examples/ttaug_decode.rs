//! Token-level aggregation flips an answer that a single view gets wrong.

use vlm_tts::decoder::{generate_with, greedy_generate, DecodeOptions, ExecutionMode};
use vlm_tts::generator::{text::detokenize, Generator, ToyModel};
use vlm_tts::types::{AugmentedInput, GenerationConfig};

fn main() -> vlm_tts::Result<()> {
    let vocab: Vec<String> = ["<eos>", "red", "blue"].iter().map(|s| s.to_string()).collect();
    let views = [
        AugmentedInput::new("q", 0, "What color is the bus?", None)?,
        AugmentedInput::new("q", 1, "Wht color is teh bus? In other words, What color is the bus?", None)?,
    ];
    let g = ToyModel::builder(vocab, "<eos>")?
        .input_row(&views[0], &[], vec![0.0, 0.6, 0.4])?
        .input_row(&views[1], &[], vec![0.0, 0.1, 0.9])?
        .build();

    let cfg = GenerationConfig {
        n_aug: 2,
        max_tokens: 2,
        ..Default::default()
    };
    let single = greedy_generate(&g, &views[0], &cfg)?;
    let trace = generate_with(&g, &views, &cfg, DecodeOptions::recording(ExecutionMode::Parallel))?;

    let eos = g.eos_token();
    println!("first view alone: {}", detokenize(g.vocab(), &single.tokens, eos));
    println!("both views:       {}", detokenize(g.vocab(), &trace.tokens, eos));
    for (step, d) in trace.aggregated_distributions.iter().flatten().enumerate() {
        println!("step {step}: averaged {:?}", d.probs());
    }
    Ok(())
}
