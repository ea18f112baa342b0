//! Pixel-level implementations of the catalog transforms.
//!
//! All operations work on 8-bit RGB rasters. Geometric operations map each
//! output pixel centre back into the source with bilinear interpolation and
//! paint anything that falls outside with the constant fill.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::{ImageBuffer, Rgb, RgbImage};
use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;

pub const FILL: u8 = 144;

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn map_pixels(img: &RgbImage, f: impl Fn([u8; 3]) -> [f64; 3]) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let v = f(p.0);
        p.0 = [clamp_u8(v[0]), clamp_u8(v[1]), clamp_u8(v[2])];
    }
    out
}

/// Applies a per-channel lookup table built from `f` on `[0, 255]`.
fn apply_lut(img: &RgbImage, f: impl Fn(f64) -> f64) -> RgbImage {
    let lut: Vec<u8> = (0..256).map(|v| clamp_u8(f(v as f64))).collect();
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = lut[*c as usize];
        }
    }
    out
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Bilinear sample at continuous pixel coordinates; outside is `FILL`.
fn sample(img: &RgbImage, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if x < -0.5 || y < -0.5 || x > w - 0.5 || y > h - 0.5 {
        return [FILL as f64; 3];
    }
    let x = x.clamp(0.0, w - 1.0);
    let y = y.clamp(0.0, h - 1.0);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as u32, y0 as u32);
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let px = |xx: u32, yy: u32| img.get_pixel(xx, yy).0;
    let (a, b, c, d) = (px(x0, y0), px(x1, y0), px(x0, y1), px(x1, y1));
    let mut out = [0.0; 3];
    for ch in 0..3 {
        let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
        let bottom = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
        out[ch] = top * (1.0 - fy) + bottom * fy;
    }
    out
}

/// Builds a `w × h` image whose pixel centre `(x, y)` samples the source at
/// `source(x, y)`.
fn remap(img: &RgbImage, w: u32, h: u32, source: impl Fn(f64, f64) -> (f64, f64)) -> RgbImage {
    ImageBuffer::from_fn(w, h, |x, y| {
        let (sx, sy) = source(x as f64, y as f64);
        let v = sample(img, sx, sy);
        Rgb([clamp_u8(v[0]), clamp_u8(v[1]), clamp_u8(v[2])])
    })
}

/// Reflect-101 border index.
fn reflect(i: i64, n: i64) -> u32 {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as u32
}

/// 3×3 convolution with reflect-101 borders.
fn convolve3(img: &RgbImage, k: &[[f64; 3]; 3]) -> RgbImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    ImageBuffer::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = [0.0; 3];
        for (dy, row) in k.iter().enumerate() {
            for (dx, &kv) in row.iter().enumerate() {
                let sx = reflect(x as i64 + dx as i64 - 1, w);
                let sy = reflect(y as i64 + dy as i64 - 1, h);
                let p = img.get_pixel(sx, sy).0;
                for c in 0..3 {
                    acc[c] += kv * p[c] as f64;
                }
            }
        }
        Rgb([clamp_u8(acc[0]), clamp_u8(acc[1]), clamp_u8(acc[2])])
    })
}

/// `(1 - α) I + α E` for a 3×3 effect kernel `E`.
fn blend_with_identity(alpha: f64, effect: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut k = effect.map(|r| r.map(|v| v * alpha));
    k[1][1] += 1.0 - alpha;
    k
}

pub fn brightness_contrast(img: &RgbImage, brightness: f64, contrast: f64, rng: &mut impl Rng) -> RgbImage {
    let alpha = 1.0 + uniform(rng, -contrast, contrast);
    let beta = uniform(rng, -brightness, brightness) * 255.0;
    apply_lut(img, |v| alpha * v + beta)
}

/// Rotates by a random angle in `[-limit, limit]` degrees about the centre,
/// shrunk so the whole rotated image stays inside the original frame.
pub fn safe_rotate(img: &RgbImage, limit_deg: f64, rng: &mut impl Rng) -> RgbImage {
    let angle = uniform(rng, -limit_deg, limit_deg).to_radians();
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (sin, cos) = angle.sin_cos();
    let bw = w * cos.abs() + h * sin.abs();
    let bh = w * sin.abs() + h * cos.abs();
    let scale = (w / bw).min(h / bh);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    remap(img, img.width(), img.height(), |x, y| {
        let (dx, dy) = ((x - cx) / scale, (y - cy) / scale);
        (cx + cos * dx + sin * dy, cy - sin * dx + cos * dy)
    })
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let k: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

fn separable(img: &RgbImage, k: &[f64]) -> RgbImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let half = (k.len() / 2) as i64;
    let pass = |src: &RgbImage, horizontal: bool| -> RgbImage {
        ImageBuffer::from_fn(src.width(), src.height(), |x, y| {
            let mut acc = [0.0; 3];
            for (i, &kv) in k.iter().enumerate() {
                let off = i as i64 - half;
                let (sx, sy) = if horizontal {
                    (reflect(x as i64 + off, w), y)
                } else {
                    (x, reflect(y as i64 + off, h))
                };
                let p = src.get_pixel(sx, sy).0;
                for c in 0..3 {
                    acc[c] += kv * p[c] as f64;
                }
            }
            Rgb([clamp_u8(acc[0]), clamp_u8(acc[1]), clamp_u8(acc[2])])
        })
    };
    pass(&pass(img, true), false)
}

/// Gaussian blur with an odd kernel size drawn from `[min_k, max_k]`.
pub fn gaussian_blur(img: &RgbImage, min_k: u32, max_k: u32, rng: &mut impl Rng) -> RgbImage {
    let sizes: Vec<u32> = (min_k..=max_k).filter(|k| k % 2 == 1).collect();
    let size = sizes[rng.random_range(0..sizes.len())] as usize;
    let sigma = 0.3 * ((size as f64 - 1.0) * 0.5 - 1.0) + 0.8;
    separable(img, &gaussian_kernel(size, sigma))
}

pub fn median_blur(img: &RgbImage, size: u32) -> RgbImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let half = (size / 2) as i64;
    ImageBuffer::from_fn(img.width(), img.height(), |x, y| {
        let mut out = [0u8; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let mut vals: Vec<u8> = Vec::with_capacity((size * size) as usize);
            for dy in -half..=half {
                for dx in -half..=half {
                    let sx = (x as i64 + dx).clamp(0, w - 1) as u32;
                    let sy = (y as i64 + dy).clamp(0, h - 1) as u32;
                    vals.push(img.get_pixel(sx, sy).0[c]);
                }
            }
            vals.sort_unstable();
            *o = vals[vals.len() / 2];
        }
        Rgb(out)
    })
}

fn luma(p: [u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

/// Contrast-limited adaptive histogram equalization of luma on an 8×8 tile
/// grid, with chroma kept by rescaling RGB towards the new luma.
pub fn clahe(img: &RgbImage, max_clip: f64, rng: &mut impl Rng) -> RgbImage {
    const TILES: u32 = 8;
    let clip = uniform(rng, 1.0, max_clip);
    let (w, h) = (img.width(), img.height());
    let tiles_x = TILES.min(w);
    let tiles_y = TILES.min(h);
    let tw = w.div_ceil(tiles_x);
    let th = h.div_ceil(tiles_y);
    let lumas: Vec<u8> = img.pixels().map(|p| clamp_u8(luma(p.0))).collect();

    let mut maps = vec![[0f64; 256]; (tiles_x * tiles_y) as usize];
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let mut hist = [0f64; 256];
            let mut count = 0.0;
            for y in ty * th..((ty + 1) * th).min(h) {
                for x in tx * tw..((tx + 1) * tw).min(w) {
                    hist[lumas[(y * w + x) as usize] as usize] += 1.0;
                    count += 1.0;
                }
            }
            if count == 0.0 {
                maps[(ty * tiles_x + tx) as usize] = std::array::from_fn(|i| i as f64);
                continue;
            }
            let limit = (clip * count / 256.0).max(1.0);
            let mut excess = 0.0;
            for v in hist.iter_mut() {
                if *v > limit {
                    excess += *v - limit;
                    *v = limit;
                }
            }
            let bonus = excess / 256.0;
            let mut acc = 0.0;
            let map = &mut maps[(ty * tiles_x + tx) as usize];
            for (i, v) in hist.iter().enumerate() {
                acc += v + bonus;
                map[i] = (acc / count * 255.0).min(255.0);
            }
        }
    }

    let coord = |v: u32, size: u32, tiles: u32| -> (u32, u32, f64) {
        let pos = (v as f64 + 0.5) / size as f64 - 0.5;
        let lo = pos.floor().clamp(0.0, (tiles - 1) as f64);
        let hi = (lo + 1.0).min((tiles - 1) as f64);
        let frac = (pos - lo).clamp(0.0, 1.0);
        (lo as u32, hi as u32, frac)
    };
    ImageBuffer::from_fn(w, h, |x, y| {
        let p = img.get_pixel(x, y).0;
        let l = lumas[(y * w + x) as usize] as usize;
        let (x0, x1, fx) = coord(x, tw, tiles_x);
        let (y0, y1, fy) = coord(y, th, tiles_y);
        let m = |tx: u32, ty: u32| maps[(ty * tiles_x + tx) as usize][l];
        let top = m(x0, y0) * (1.0 - fx) + m(x1, y0) * fx;
        let bottom = m(x0, y1) * (1.0 - fx) + m(x1, y1) * fx;
        let new_l = top * (1.0 - fy) + bottom * fy;
        let old_l = luma(p);
        let shift = new_l - old_l;
        Rgb(p.map(|c| clamp_u8(c as f64 + shift)))
    })
}

pub fn gamma(img: &RgbImage, lo: f64, hi: f64, rng: &mut impl Rng) -> RgbImage {
    let g = uniform(rng, lo, hi) / 100.0;
    apply_lut(img, |v| 255.0 * (v / 255.0).powf(g))
}

fn rgb_to_hsv(p: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = p.map(|c| c as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let hue = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { d / max * 255.0 };
    (hue, sat, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let s = s / 255.0;
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Shifts hue (in half-degrees, as 8-bit HSV stores it), saturation and value.
pub fn hue_saturation_value(img: &RgbImage, hue: f64, sat: f64, val: f64, rng: &mut impl Rng) -> RgbImage {
    let dh = uniform(rng, -hue, hue) * 2.0;
    let ds = uniform(rng, -sat, sat);
    let dv = uniform(rng, -val, val);
    map_pixels(img, |p| {
        let (h, s, v) = rgb_to_hsv(p);
        hsv_to_rgb(h + dh, (s + ds).clamp(0.0, 255.0), (v + dv).clamp(0.0, 255.0))
    })
}

pub fn resize(img: &RgbImage, w: u32, h: u32) -> RgbImage {
    let sx = img.width() as f64 / w as f64;
    let sy = img.height() as f64 / h as f64;
    remap(img, w, h, |x, y| ((x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5))
}

pub fn random_scale(img: &RgbImage, limit: f64, rng: &mut impl Rng) -> RgbImage {
    let f = uniform(rng, 1.0 - limit, 1.0 + limit);
    let w = ((img.width() as f64 * f).round() as u32).max(1);
    let h = ((img.height() as f64 * f).round() as u32).max(1);
    resize(img, w, h)
}

pub fn rgb_shift(img: &RgbImage, limits: [f64; 3], rng: &mut impl Rng) -> RgbImage {
    let shift = limits.map(|l| uniform(rng, -l, l));
    map_pixels(img, |p| [0, 1, 2].map(|c| p[c] as f64 + shift[c]))
}

pub fn jpeg_roundtrip(img: &RgbImage, lo: u8, hi: u8, rng: &mut impl Rng) -> Result<RgbImage> {
    let quality = rng.random_range(lo..=hi);
    let mut buf = Cursor::new(Vec::new());
    JpegEncoder::new_with_quality(&mut buf, quality).encode_image(img)?;
    Ok(image::load_from_memory(buf.get_ref())?.to_rgb8())
}

pub fn sharpen(img: &RgbImage, alpha: (f64, f64), lightness: (f64, f64), rng: &mut impl Rng) -> RgbImage {
    let a = uniform(rng, alpha.0, alpha.1);
    let l = uniform(rng, lightness.0, lightness.1);
    let effect = [[-1.0, -1.0, -1.0], [-1.0, 8.0 + l, -1.0], [-1.0, -1.0, -1.0]];
    convolve3(img, &blend_with_identity(a, effect))
}

pub fn emboss(img: &RgbImage, alpha: (f64, f64), strength: (f64, f64), rng: &mut impl Rng) -> RgbImage {
    let a = uniform(rng, alpha.0, alpha.1);
    let s = uniform(rng, strength.0, strength.1);
    let effect = [[-1.0 - s, -s, 0.0], [-s, 1.0, s], [0.0, s, 1.0 + s]];
    convolve3(img, &blend_with_identity(a, effect))
}

/// sRGB colour of a black body at `kelvin`, channels in `[0, 1]`.
pub fn blackbody_rgb(kelvin: f64) -> [f64; 3] {
    let t = kelvin / 100.0;
    let r = if t <= 66.0 {
        255.0
    } else {
        329.698_727_446 * (t - 60.0).powf(-0.133_204_759_2)
    };
    let g = if t <= 66.0 {
        99.470_802_586_1 * t.ln() - 161.119_568_166_1
    } else {
        288.122_169_528_3 * (t - 60.0).powf(-0.075_514_849_2)
    };
    let b = if t >= 66.0 {
        255.0
    } else if t <= 19.0 {
        0.0
    } else {
        138.517_731_223_1 * (t - 10.0).ln() - 305.044_792_730_7
    };
    [r, g, b].map(|c| c.clamp(0.0, 255.0) / 255.0)
}

/// Multiplies channels by a black-body illuminant between 3000 K and
/// 15000 K, normalized to keep green fixed.
pub fn planckian_jitter(img: &RgbImage, rng: &mut impl Rng) -> RgbImage {
    let kelvin = uniform(rng, 3000.0, 15000.0);
    let rgb = blackbody_rgb(kelvin);
    let coef = rgb.map(|c| c / rgb[1]);
    map_pixels(img, |p| [0, 1, 2].map(|c| p[c] as f64 * coef[c]))
}

/// Blends translucent white discs scattered around the image centre.
pub fn random_fog(img: &RgbImage, alpha_coef: f64, rng: &mut impl Rng) -> RgbImage {
    let fog_coef = uniform(rng, 0.3, 1.0);
    let (w, h) = (img.width() as f64, img.height() as f64);
    let radius = (fog_coef * w.min(h) / 4.0).max(1.0);
    let discs = (10.0 * fog_coef).ceil() as usize + 3;
    let centers: Vec<(f64, f64)> = (0..discs)
        .map(|_| {
            (
                uniform(rng, w * 0.25, w * 0.75),
                uniform(rng, h * 0.25, h * 0.75),
            )
        })
        .collect();
    let alpha = alpha_coef * fog_coef;
    ImageBuffer::from_fn(img.width(), img.height(), |x, y| {
        let inside = centers
            .iter()
            .filter(|(cx, cy)| (x as f64 - cx).hypot(y as f64 - cy) <= radius)
            .count() as i32;
        let keep = (1.0 - alpha).powi(inside);
        let p = img.get_pixel(x, y).0;
        Rgb(p.map(|c| clamp_u8(c as f64 * keep + 255.0 * (1.0 - keep))))
    })
}

/// Cubic Bézier tone curve with control points near 1/4 and 3/4.
pub fn tone_curve(img: &RgbImage, scale: f64, rng: &mut impl Rng) -> RgbImage {
    let low = Normal::new(0.25, scale).unwrap().sample(rng).clamp(0.0, 1.0);
    let high = Normal::new(0.75, scale).unwrap().sample(rng).clamp(0.0, 1.0);
    apply_lut(img, |v| {
        let t = v / 255.0;
        let y = 3.0 * (1.0 - t).powi(2) * t * low + 3.0 * (1.0 - t) * t * t * high + t.powi(3);
        y * 255.0
    })
}

/// Monotone piecewise-linear map of `[0, size]` onto itself with `steps`
/// cells whose widths are perturbed by up to `limit`.
fn distorted_axis(size: f64, steps: usize, limit: f64, rng: &mut impl Rng) -> Vec<f64> {
    let widths: Vec<f64> = (0..steps).map(|_| 1.0 + uniform(rng, -limit, limit)).collect();
    let total: f64 = widths.iter().sum();
    let mut knots = vec![0.0];
    for w in &widths {
        knots.push(knots.last().unwrap() + w / total * size);
    }
    knots
}

fn piecewise(pos: f64, size: f64, knots: &[f64]) -> f64 {
    let steps = knots.len() - 1;
    let cell = size / steps as f64;
    let k = ((pos / cell).floor() as usize).min(steps - 1);
    let frac = pos / cell - k as f64;
    knots[k] + frac * (knots[k + 1] - knots[k])
}

pub fn grid_distortion(img: &RgbImage, steps: usize, limit: f64, rng: &mut impl Rng) -> RgbImage {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let xs = distorted_axis(w, steps, limit, rng);
    let ys = distorted_axis(h, steps, limit, rng);
    remap(img, img.width(), img.height(), |x, y| {
        (
            piecewise(x + 0.5, w, &xs) - 0.5,
            piecewise(y + 0.5, h, &ys) - 0.5,
        )
    })
}

/// Homography taking `src[i]` to `dst[i]`.
fn homography(src: &[(f64, f64); 4], dst: &[(f64, f64); 4]) -> Option<Matrix3<f64>> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (x, y) = src[i];
        let (u, v) = dst[i];
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    Some(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0))
}

fn project(m: &Matrix3<f64>, x: f64, y: f64) -> (f64, f64) {
    let p = m * Vector3::new(x, y, 1.0);
    (p[0] / p[2], p[1] / p[2])
}

/// Random four-point perspective warp. Corners move inward by `|N(0, σ)|`
/// of the image size with `σ ~ U(0, scale)`; with `fit_output` the canvas
/// is resized to hold the whole warped image.
pub fn perspective(img: &RgbImage, scale: f64, fit_output: bool, rng: &mut impl Rng) -> RgbImage {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let sigma = uniform(rng, 0.0, scale);
    let mut jitter = || -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sigma).unwrap().sample(rng).abs().min(3.0 * sigma)
    };
    let quad = [
        (jitter() * w, jitter() * h),
        (w - jitter() * w, jitter() * h),
        (w - jitter() * w, h - jitter() * h),
        (jitter() * w, h - jitter() * h),
    ];
    let rect = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    // The chosen quad is stretched to fill the frame.
    let Some(fwd) = homography(&quad, &rect) else {
        return img.clone();
    };
    let (mut out_w, mut out_h) = (w, h);
    let mut m = fwd;
    if fit_output {
        let corners = rect.map(|(x, y)| project(&fwd, x, y));
        let min_x = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let max_x = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let max_y = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        out_w = (max_x - min_x).clamp(0.5 * w, 2.0 * w);
        out_h = (max_y - min_y).clamp(0.5 * h, 2.0 * h);
        // Rescale so the bounding box lands exactly on the output canvas.
        let sx = out_w / (max_x - min_x);
        let sy = out_h / (max_y - min_y);
        m = Matrix3::new(sx, 0.0, -sx * min_x, 0.0, sy, -sy * min_y, 0.0, 0.0, 1.0) * fwd;
    }
    let Some(inv) = m.try_inverse() else {
        return img.clone();
    };
    let ow = (out_w.round() as u32).max(1);
    let oh = (out_h.round() as u32).max(1);
    remap(img, ow, oh, |x, y| {
        let (sx, sy) = project(&inv, x + 0.5, y + 0.5);
        (sx - 0.5, sy - 0.5)
    })
}

fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32) {
    for y in y0..y1.min(img.height()) {
        for x in x0..x1.min(img.width()) {
            img.put_pixel(x, y, Rgb([FILL; 3]));
        }
    }
}

/// Regular grid of square holes, `ratio` of each grid unit's side.
pub fn grid_dropout(img: &RgbImage, ratio: f64, random_offset: bool, rng: &mut impl Rng) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let short = w.min(h);
    let lo = (short / 10).max(2);
    let hi = (short / 2).max(lo);
    let unit = rng.random_range(lo..=hi);
    let hole = ((unit as f64 * ratio).round() as u32).clamp(1, unit);
    let (ox, oy) = if random_offset && unit > hole {
        (rng.random_range(0..=unit - hole), rng.random_range(0..=unit - hole))
    } else {
        (0, 0)
    };
    let mut out = img.clone();
    let mut y = oy;
    while y < h {
        let mut x = ox;
        while x < w {
            fill_rect(&mut out, x, y, x + hole, y + hole);
            x += unit;
        }
        y += unit;
    }
    out
}

/// One or two rectangular holes, 10–20% of each side.
pub fn coarse_dropout(img: &RgbImage, rng: &mut impl Rng) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let holes = rng.random_range(1..=2);
    let mut out = img.clone();
    for _ in 0..holes {
        let hw = ((w as f64 * uniform(rng, 0.1, 0.2)).round() as u32).clamp(1, w);
        let hh = ((h as f64 * uniform(rng, 0.1, 0.2)).round() as u32).clamp(1, h);
        let x = rng.random_range(0..=w - hw);
        let y = rng.random_range(0..=h - hh);
        fill_rect(&mut out, x, y, x + hw, y + hh);
    }
    out
}
