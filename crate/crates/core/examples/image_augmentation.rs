//! Seeded image views at each strength, written next to the target dir.

use std::path::Path;

use vlm_tts::imageaug::{apply_image_aug_traced, catalog};
use vlm_tts::types::Strength;

fn main() -> vlm_tts::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let chart = image::open(root.join("fixtures/chart.png"))?.to_rgb8();
    let out = root.join("../../target/image-augmentation");
    std::fs::create_dir_all(&out)?;
    for strength in [Strength::Low, Strength::Medium, Strength::High] {
        println!("{strength:?}: {} transforms", catalog(strength).len());
        for seed in 0..3 {
            let o = apply_image_aug_traced(&chart, strength, seed)?;
            let path = out.join(format!("{strength:?}_{seed}.png").to_lowercase());
            o.image.save(&path)?;
            println!("  seed {seed}: drew {:?}, applied {:?} -> {}", o.selected, o.applied, path.display());
        }
    }
    Ok(())
}
