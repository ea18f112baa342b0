//! Classical image augmentation at three strengths.
//!
//! Each strength owns a fixed catalog of transforms. An augmentation draws
//! three distinct catalog entries, then applies each in draw order with its
//! own probability.

mod ops;

use image::RgbImage;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::Strength;

pub use ops::FILL;

/// Transforms drawn per augmentation.
pub const TRANSFORMS_PER_AUG: usize = 3;

/// Probability used where the catalog leaves it unstated.
const DEFAULT_P: f64 = 0.5;

/// Parameterized transform.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    BrightnessContrast { brightness: f64, contrast: f64 },
    SafeRotate { limit_deg: f64 },
    GaussianBlur { min_kernel: u32, max_kernel: u32 },
    Clahe { clip_limit: f64 },
    RandomGamma { min: f64, max: f64 },
    HueSaturationValue { hue: f64, sat: f64, val: f64 },
    RandomScale { limit: f64 },
    RgbShift { r: f64, g: f64, b: f64 },
    MedianBlur { kernel: u32 },
    ImageCompression { min_quality: u8, max_quality: u8 },
    Sharpen { alpha: (f64, f64), lightness: (f64, f64) },
    PlanckianJitter,
    RandomFog { alpha_coef: f64 },
    RandomToneCurve { scale: f64 },
    Emboss { alpha: (f64, f64), strength: (f64, f64) },
    GridDistortion { steps: usize, limit: f64 },
    Perspective { scale: f64, fit_output: bool },
    GridDropout { ratio: f64, random_offset: bool },
    CoarseDropout,
}

/// One catalog entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub name: &'static str,
    pub transform: Transform,
    pub apply_prob: f64,
}

impl Transform {
    /// Named scalar ranges, `(lo, hi)`.
    pub fn params(&self) -> Vec<(&'static str, (f64, f64))> {
        use Transform::*;
        let sym = |v: f64| (-v, v);
        match *self {
            BrightnessContrast { brightness, contrast } => {
                vec![("brightness", sym(brightness)), ("contrast", sym(contrast))]
            }
            SafeRotate { limit_deg } => vec![("angle_deg", sym(limit_deg))],
            GaussianBlur { min_kernel, max_kernel } => {
                vec![("kernel", (min_kernel as f64, max_kernel as f64))]
            }
            Clahe { clip_limit } => vec![("clip_limit", (1.0, clip_limit)), ("tile_grid", (8.0, 8.0))],
            RandomGamma { min, max } => vec![("gamma_percent", (min, max))],
            HueSaturationValue { hue, sat, val } => vec![
                ("hue_shift", sym(hue)),
                ("sat_shift", sym(sat)),
                ("val_shift", sym(val)),
            ],
            RandomScale { limit } => vec![("scale", (1.0 - limit, 1.0 + limit))],
            RgbShift { r, g, b } => vec![("r_shift", sym(r)), ("g_shift", sym(g)), ("b_shift", sym(b))],
            MedianBlur { kernel } => vec![("kernel", (kernel as f64, kernel as f64))],
            ImageCompression { min_quality, max_quality } => {
                vec![("quality", (min_quality as f64, max_quality as f64))]
            }
            Sharpen { alpha, lightness } => vec![("alpha", alpha), ("lightness", lightness)],
            PlanckianJitter => vec![("kelvin", (3000.0, 15000.0))],
            RandomFog { alpha_coef } => vec![("fog_coef", (0.3, 1.0)), ("alpha_coef", (alpha_coef, alpha_coef))],
            RandomToneCurve { scale } => vec![("scale", (scale, scale))],
            Emboss { alpha, strength } => vec![("alpha", alpha), ("strength", strength)],
            GridDistortion { steps, limit } => {
                vec![("num_steps", (steps as f64, steps as f64)), ("distort_limit", sym(limit))]
            }
            Perspective { scale, .. } => vec![("scale", (0.0, scale))],
            GridDropout { ratio, .. } => vec![("ratio", (ratio, ratio))],
            CoarseDropout => vec![("holes", (1.0, 2.0)), ("hole_fraction", (0.1, 0.2))],
        }
    }

    /// Applies the transform, drawing its random parameters from `rng`.
    pub fn apply(&self, img: &RgbImage, rng: &mut impl Rng) -> Result<RgbImage> {
        use Transform::*;
        Ok(match *self {
            BrightnessContrast { brightness, contrast } => ops::brightness_contrast(img, brightness, contrast, rng),
            SafeRotate { limit_deg } => ops::safe_rotate(img, limit_deg, rng),
            GaussianBlur { min_kernel, max_kernel } => ops::gaussian_blur(img, min_kernel, max_kernel, rng),
            Clahe { clip_limit } => ops::clahe(img, clip_limit, rng),
            RandomGamma { min, max } => ops::gamma(img, min, max, rng),
            HueSaturationValue { hue, sat, val } => ops::hue_saturation_value(img, hue, sat, val, rng),
            RandomScale { limit } => ops::random_scale(img, limit, rng),
            RgbShift { r, g, b } => ops::rgb_shift(img, [r, g, b], rng),
            MedianBlur { kernel } => ops::median_blur(img, kernel),
            ImageCompression { min_quality, max_quality } => {
                ops::jpeg_roundtrip(img, min_quality, max_quality, rng)?
            }
            Sharpen { alpha, lightness } => ops::sharpen(img, alpha, lightness, rng),
            PlanckianJitter => ops::planckian_jitter(img, rng),
            RandomFog { alpha_coef } => ops::random_fog(img, alpha_coef, rng),
            RandomToneCurve { scale } => ops::tone_curve(img, scale, rng),
            Emboss { alpha, strength } => ops::emboss(img, alpha, strength, rng),
            GridDistortion { steps, limit } => ops::grid_distortion(img, steps, limit, rng),
            Perspective { scale, fit_output } => ops::perspective(img, scale, fit_output, rng),
            GridDropout { ratio, random_offset } => ops::grid_dropout(img, ratio, random_offset, rng),
            CoarseDropout => ops::coarse_dropout(img, rng),
        })
    }
}

fn spec(name: &'static str, transform: Transform, apply_prob: f64) -> TransformSpec {
    TransformSpec { name, transform, apply_prob }
}

/// Fixed transform catalog for a strength.
pub fn catalog(strength: Strength) -> Vec<TransformSpec> {
    use Transform::*;
    match strength {
        Strength::High => vec![
            spec("random_brightness_contrast", BrightnessContrast { brightness: 0.2, contrast: 0.2 }, 0.6),
            spec("safe_rotate", SafeRotate { limit_deg: 20.0 }, 0.6),
            spec("gaussian_blur", GaussianBlur { min_kernel: 3, max_kernel: 7 }, 0.6),
            spec("clahe", Clahe { clip_limit: 4.0 }, 0.5),
            spec("random_gamma", RandomGamma { min: 80.0, max: 120.0 }, 0.6),
            spec("hue_saturation_value", HueSaturationValue { hue: 20.0, sat: 30.0, val: 20.0 }, 0.6),
            spec("random_scale", RandomScale { limit: 0.1 }, 0.6),
            spec("rgb_shift", RgbShift { r: 20.0, g: 20.0, b: 20.0 }, 0.6),
            spec("median_blur", MedianBlur { kernel: 3 }, 0.6),
            spec("image_compression", ImageCompression { min_quality: 85, max_quality: 95 }, 0.45),
            spec("sharpen", Sharpen { alpha: (0.2, 0.5), lightness: (0.5, 1.0) }, 0.6),
            spec("planckian_jitter", PlanckianJitter, DEFAULT_P),
            spec("random_fog", RandomFog { alpha_coef: 0.15 }, DEFAULT_P),
            spec("random_tone_curve", RandomToneCurve { scale: 0.1 }, DEFAULT_P),
            spec("emboss", Emboss { alpha: (0.2, 0.5), strength: (0.2, 0.7) }, DEFAULT_P),
            spec("grid_distortion", GridDistortion { steps: 5, limit: 0.3 }, DEFAULT_P),
            spec("perspective", Perspective { scale: 0.05, fit_output: true }, DEFAULT_P),
            spec("grid_dropout", GridDropout { ratio: 0.25, random_offset: true }, 0.66),
            spec("coarse_dropout", CoarseDropout, 0.7),
        ],
        Strength::Medium => vec![
            spec("random_brightness_contrast", BrightnessContrast { brightness: 0.2, contrast: 0.2 }, DEFAULT_P),
            spec("safe_rotate", SafeRotate { limit_deg: 15.0 }, DEFAULT_P),
            spec("gaussian_blur", GaussianBlur { min_kernel: 3, max_kernel: 7 }, 0.5),
            spec("clahe", Clahe { clip_limit: 3.0 }, 0.4),
            spec("random_gamma", RandomGamma { min: 80.0, max: 120.0 }, 0.5),
            spec("hue_saturation_value", HueSaturationValue { hue: 15.0, sat: 15.0, val: 15.0 }, 0.5),
            spec("random_scale", RandomScale { limit: 0.08 }, 0.5),
            spec("rgb_shift", RgbShift { r: 15.0, g: 15.0, b: 15.0 }, DEFAULT_P),
            spec("median_blur", MedianBlur { kernel: 3 }, 0.5),
            spec("image_compression", ImageCompression { min_quality: 85, max_quality: 95 }, 0.35),
            spec("sharpen", Sharpen { alpha: (0.2, 0.5), lightness: (0.6, 1.0) }, 0.5),
            spec("planckian_jitter", PlanckianJitter, 0.5),
            spec("random_fog", RandomFog { alpha_coef: 0.1 }, 0.3),
            spec("random_tone_curve", RandomToneCurve { scale: 0.2 }, 0.5),
            spec("emboss", Emboss { alpha: (0.2, 0.5), strength: (0.5, 0.7) }, 0.5),
            spec("grid_distortion", GridDistortion { steps: 5, limit: 0.2 }, 0.5),
            spec("perspective", Perspective { scale: 0.03, fit_output: true }, 0.5),
            spec("grid_dropout", GridDropout { ratio: 0.25, random_offset: true }, 0.6),
            spec("coarse_dropout", CoarseDropout, 0.5),
        ],
        Strength::Low => vec![
            spec("random_brightness_contrast", BrightnessContrast { brightness: 0.1, contrast: 0.1 }, 0.3),
            spec("safe_rotate", SafeRotate { limit_deg: 10.0 }, 0.3),
            spec("gaussian_blur", GaussianBlur { min_kernel: 3, max_kernel: 5 }, 0.3),
            spec("clahe", Clahe { clip_limit: 2.0 }, 0.3),
            spec("random_gamma", RandomGamma { min: 90.0, max: 110.0 }, 0.3),
            spec("hue_saturation_value", HueSaturationValue { hue: 10.0, sat: 10.0, val: 10.0 }, 0.3),
            spec("random_scale", RandomScale { limit: 0.05 }, 0.3),
            spec("rgb_shift", RgbShift { r: 10.0, g: 10.0, b: 10.0 }, 0.3),
            spec("median_blur", MedianBlur { kernel: 3 }, 0.3),
            spec("image_compression", ImageCompression { min_quality: 85, max_quality: 95 }, 0.25),
            spec("sharpen", Sharpen { alpha: (0.1, 0.3), lightness: (0.7, 1.0) }, 0.3),
            spec("planckian_jitter", PlanckianJitter, 0.3),
            spec("random_fog", RandomFog { alpha_coef: 0.05 }, 0.2),
            spec("random_tone_curve", RandomToneCurve { scale: 0.1 }, 0.3),
            spec("emboss", Emboss { alpha: (0.1, 0.3), strength: (0.3, 0.5) }, 0.3),
            spec("grid_distortion", GridDistortion { steps: 5, limit: 0.1 }, 0.3),
            spec("perspective", Perspective { scale: 0.02, fit_output: true }, 0.3),
        ],
    }
}

/// Augmented image plus the names of the transforms that actually fired.
#[derive(Debug, Clone)]
pub struct ImageAugOutcome {
    pub image: RgbImage,
    pub selected: Vec<&'static str>,
    pub applied: Vec<&'static str>,
}

/// Draws three distinct transforms and applies each with its probability.
pub fn apply_image_aug_traced(image: &RgbImage, strength: Strength, seed: u64) -> Result<ImageAugOutcome> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::EmptyImage);
    }
    let specs = catalog(strength);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, specs.len(), TRANSFORMS_PER_AUG);
    let (w0, h0) = (image.width() as f64, image.height() as f64);
    let mut out = image.clone();
    let mut selected = Vec::with_capacity(TRANSFORMS_PER_AUG);
    let mut applied = Vec::new();
    for i in picks.iter() {
        let s = &specs[i];
        selected.push(s.name);
        if !rng.random_bool(s.apply_prob) {
            continue;
        }
        out = s.transform.apply(&out, &mut rng)?;
        applied.push(s.name);
    }
    // Composed geometry never leaves [0.5, 2] of the input size.
    let w = (out.width() as f64).clamp((0.5 * w0).ceil(), 2.0 * w0) as u32;
    let h = (out.height() as f64).clamp((0.5 * h0).ceil(), 2.0 * h0) as u32;
    if (w, h) != out.dimensions() {
        out = ops::resize(&out, w.max(1), h.max(1));
    }
    Ok(ImageAugOutcome { image: out, selected, applied })
}

/// Augments `image` at `strength`; deterministic in `seed`.
pub fn apply_image_aug(image: &RgbImage, strength: Strength, seed: u64) -> Result<RgbImage> {
    Ok(apply_image_aug_traced(image, strength, seed)?.image)
}
