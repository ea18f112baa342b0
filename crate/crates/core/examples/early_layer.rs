//! Averaging hidden states at an intermediate layer instead of final
//! probabilities.

use vlm_tts::decoder::{generate_with, DecodeOptions, ExecutionMode};
use vlm_tts::generator::{Generator, ToyModel};
use vlm_tts::types::{AugmentedInput, GenerationConfig, Layer};

fn main() -> vlm_tts::Result<()> {
    let vocab: Vec<String> = ["<eos>", "yes", "no"].iter().map(|s| s.to_string()).collect();
    let views = [
        AugmentedInput::new("q", 0, "Is the light on?", None)?,
        AugmentedInput::new("q", 1, "Is teh light on? In other words, Is the light on?", None)?,
    ];
    let g = ToyModel::builder(vocab, "<eos>")?
        .layers(4)
        .input_row(&views[0], &[], vec![0.05, 0.55, 0.40])?
        .input_row(&views[1], &[], vec![0.05, 0.30, 0.65])?
        .build();

    let h = g.step_hidden(&views[0], &[], 2)?;
    println!("layer-2 hidden state: {h:.3?}");
    println!("resumed to the head:  {:?}", g.resume_from_hidden(&h, 2)?.probs());

    for layer in [Layer::Index(1), Layer::Index(2), Layer::Index(3), Layer::Final] {
        let cfg = GenerationConfig {
            n_aug: 2,
            max_tokens: 1,
            layer,
            ..Default::default()
        };
        let t = generate_with(&g, &views, &cfg, DecodeOptions::recording(ExecutionMode::Sequential))?;
        let d = &t.aggregated_distributions.unwrap()[0];
        println!("{layer:?}: aggregate {:.4?} -> token {}", d.probs(), t.tokens[0]);
    }
    Ok(())
}
