//! Writes the augmented variants of one question to disk.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::inputs::build_inputs;
use crate::textaug::Paraphraser;
use crate::types::{encode_png, GenerationConfig, QuestionRecord};

use super::eval::load_record_image;

pub const PROMPTS_FILE: &str = "prompts.txt";

#[derive(Debug, Clone)]
pub struct AugmentDump {
    pub prompts_path: PathBuf,
    pub image_paths: Vec<PathBuf>,
}

/// Reads one question record from a JSON file.
pub fn read_record(path: &Path) -> Result<QuestionRecord> {
    let rec: QuestionRecord = serde_json::from_str(&fs::read_to_string(path)?)?;
    rec.validate()?;
    Ok(rec)
}

/// Writes one prompt per line (newlines escaped as `\n`) and, when the
/// record has an image, `image_00.png`, `image_01.png`, ... Image paths in
/// the record resolve against `base`.
pub fn augment_dump(
    rec: &QuestionRecord,
    base: &Path,
    cfg: &GenerationConfig,
    paraphraser: Option<&dyn Paraphraser>,
    seed: u64,
    out: &Path,
) -> Result<AugmentDump> {
    let image = load_record_image(rec, base)?;
    let inputs = build_inputs(&rec.id, &rec.prompt, image, cfg, paraphraser, seed)?;
    fs::create_dir_all(out)?;
    let mut text = String::new();
    for x in &inputs {
        text.push_str(&x.prompt().replace('\n', "\\n"));
        text.push('\n');
    }
    let prompts_path = out.join(PROMPTS_FILE);
    fs::write(&prompts_path, text)?;
    let mut image_paths = Vec::new();
    for x in &inputs {
        if let Some(img) = x.image() {
            let path = out.join(format!("image_{:02}.png", x.variant_index));
            fs::write(&path, encode_png(img)?)?;
            image_paths.push(path);
        }
    }
    Ok(AugmentDump { prompts_path, image_paths })
}
