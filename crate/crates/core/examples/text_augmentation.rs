//! Classical prompt perturbations and consistency enforcement.

use vlm_tts::inputs::augment_prompts;
use vlm_tts::textaug::{keyboard_error, sentence_reorder, word_delete, word_split};
use vlm_tts::types::{GenerationConfig, Modality};

fn main() -> vlm_tts::Result<()> {
    let prompt = "What color is the car? It is parked near the station.";
    println!("keyboard error:   {}", keyboard_error(prompt, 0.1, 1));
    println!("word split:       {}", word_split(prompt, 2));
    println!("word delete:      {}", word_delete(prompt, 3));
    println!("sentence reorder: {}", sentence_reorder(prompt, 4));

    let cfg = GenerationConfig {
        n_aug: 4,
        modality: Modality::Text,
        ..Default::default()
    };
    for p in augment_prompts(prompt, cfg.n_aug, &cfg, None, 7)? {
        println!("> {p}");
    }
    Ok(())
}
