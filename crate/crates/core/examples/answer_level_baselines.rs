//! Whole-answer selection: voting, log-probability ranking, and the model
//! choosing or merging its own candidates.

use vlm_tts::baselines::{
    render_selector_prompt, render_synthesizer_prompt, sample_and_rank, self_consistency, self_select, self_synthesize,
};
use vlm_tts::generator::ToyModel;
use vlm_tts::types::{AugmentedInput, GenerationConfig};

fn main() -> vlm_tts::Result<()> {
    let answers: Vec<String> = ["Red", "blue", "red "].iter().map(|s| s.to_string()).collect();
    println!("self-consistency: {}", self_consistency(&answers)?);

    let ranked = sample_and_rank(&[("a bus".into(), vec![-0.9, -1.1]), ("a van".into(), vec![-2.5])])?;
    println!("sample-and-rank:  {ranked}");

    let question = AugmentedInput::text("What color is the bus?")?;
    let candidates: Vec<String> = vec!["red".into(), "blue".into()];
    let selector = render_selector_prompt(question.prompt(), &candidates);
    let synthesizer = render_synthesizer_prompt(question.prompt(), &candidates);
    let g = ToyModel::builder(ToyModel::char_vocab(), "<eos>")?
        .script(&selector, 0, "1")?
        .script(&synthesizer, 0, "dark blue")?
        .build();
    let picked = self_select(&g, &question, &candidates, 0)?;
    println!("self-selector:    {picked} ({})", candidates[picked]);

    let cfg = GenerationConfig {
        max_tokens: 16,
        ..Default::default()
    };
    println!("self-synthesizer: {:?}", self_synthesize(&g, &question, &candidates, &cfg)?);
    Ok(())
}
