//! Pseudolabel fine-tuning on one question, with weights restored after.

use std::path::Path;

use vlm_tts::adapt::{ttadapt_answer, AdaptConfig};
use vlm_tts::cli::eval::question_inputs;
use vlm_tts::evalkit::load_dataset;
use vlm_tts::generator::{text::detokenize, Generator, ToyModel};
use vlm_tts::types::GenerationConfig;

fn main() -> vlm_tts::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut g = ToyModel::from_spec_file(&fixtures.join("toy_model.json"))?;
    let records = load_dataset(fixtures.join("toy_dataset.jsonl"))?;
    let gen = GenerationConfig {
        n_aug: 4,
        max_tokens: 4,
        ..Default::default()
    };
    let cfg = AdaptConfig {
        learning_rate: 1e-2,
        ..Default::default()
    };
    for rec in records.iter().take(4) {
        let (_, inputs) = question_inputs(&gen, &g, rec, &fixtures)?;
        let before = g.step(&inputs[0], &[])?;
        let out = ttadapt_answer(&mut g, &inputs, &gen, &cfg)?;
        let answer = detokenize(g.vocab(), &out.trace.tokens, g.eos_token());
        let losses: Vec<String> = out.losses.iter().map(|l| format!("{:.3}", l[l.len() - 1])).collect();
        println!("{}: {answer:<8} final losses {losses:?}, restored {}", rec.id, g.step(&inputs[0], &[])? == before);
    }
    Ok(())
}
