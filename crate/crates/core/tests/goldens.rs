use image::{Rgb, RgbImage};
use vlm_tts::imageaug::{apply_image_aug, apply_image_aug_traced};
use vlm_tts::textaug::{classical_text_pipeline, keyboard_error, word_split};
use vlm_tts::types::{image_fingerprint, Strength};

#[test]
fn keyboard_error_every_key() {
    assert_eq!(keyboard_error("cat", 1.0, 7), "xsy");
}

#[test]
fn word_split_seed_3() {
    assert_eq!(word_split("notebook", 3), "noteb ook");
}

#[test]
fn classical_pipeline_seeds() {
    let text = "What color is the car? It is parked.";
    assert_eq!(classical_text_pipeline(text, 11), text);
    assert_eq!(classical_text_pipeline(text, 14), "It is parkrd. Wha t color is the car?");
}

#[test]
fn gray_image_high_strength_seed_5() {
    let img = RgbImage::from_pixel(64, 64, Rgb([128, 128, 128]));
    let out = apply_image_aug_traced(&img, Strength::High, 5).unwrap();
    assert_eq!(out.selected, ["grid_dropout", "clahe", "hue_saturation_value"]);
    assert_eq!(out.applied, ["grid_dropout", "clahe"]);
    assert_eq!(out.image.dimensions(), (64, 64));
    assert_eq!(image_fingerprint(&out.image), 0x56ae_c18f_cd27_4b0e);
    assert_eq!(apply_image_aug(&img, Strength::High, 5).unwrap(), out.image);
}
