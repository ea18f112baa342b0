//! Parallel versus sequential decoding overhead.
//!
//! Peak memory comes from [`PeakAlloc`] when a binary installs it as the
//! global allocator, and from the kernel's resident high-water mark
//! otherwise.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decoder::{generate_with, DecodeOptions, ExecutionMode};
use crate::error::{Error, Result};
use crate::generator::{Generator, PromptMatch, ImageMatch, ToyModel};
use crate::inputs::augment_prompts;
use crate::types::{AugmentedInput, GenerationConfig, GenerationTrace, Modality, StableHasher};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static INSTALLED: AtomicBool = AtomicBool::new(false);

/// Counting wrapper around the system allocator.
pub struct PeakAlloc;

impl PeakAlloc {
    fn grow(by: usize) {
        let now = CURRENT.fetch_add(by, Ordering::Relaxed) + by;
        PEAK.fetch_max(now, Ordering::Relaxed);
    }
}

unsafe impl GlobalAlloc for PeakAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            INSTALLED.store(true, Ordering::Relaxed);
            Self::grow(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            if new_size >= layout.size() {
                Self::grow(new_size - layout.size());
            } else {
                CURRENT.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

/// Starts a new peak window at the current heap size.
fn reset_peak() {
    PEAK.store(CURRENT.load(Ordering::Relaxed), Ordering::Relaxed);
}

/// Heap high-water mark since the last reset, or the process's resident
/// high-water mark when the counting allocator is not installed.
fn peak_bytes() -> u64 {
    if INSTALLED.load(Ordering::Relaxed) {
        return PEAK.load(Ordering::Relaxed) as u64;
    }
    std::fs::read_to_string("/proc/self/status")
        .ok()
        .and_then(|s| {
            s.lines()
                .find_map(|l| l.strip_prefix("VmHWM:"))
                .and_then(|v| v.trim().trim_end_matches("kB").trim().parse::<u64>().ok())
        })
        .map(|kb| kb * 1024)
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchModes {
    Parallel,
    Sequential,
    Both,
}

impl BenchModes {
    pub fn modes(self) -> Vec<ExecutionMode> {
        match self {
            BenchModes::Parallel => vec![ExecutionMode::Parallel],
            BenchModes::Sequential => vec![ExecutionMode::Sequential],
            BenchModes::Both => vec![ExecutionMode::Parallel, ExecutionMode::Sequential],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub n_aug: usize,
    pub mode: ExecutionMode,
    pub peak_memory_bytes: u64,
    /// Median over repeats.
    pub wall_time_s_per_query: f64,
    /// Hash of the generated tokens and distributions; equal across modes.
    pub trace_digest: u64,
}

pub struct BenchSettings {
    pub prompt: String,
    pub max_tokens: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            prompt: "Describe the chart. What is the highest value shown?".into(),
            max_tokens: 16,
            repeats: 5,
            seed: 0,
        }
    }
}

/// Text-only toy model that keeps generating for `max_tokens` steps over a
/// vocabulary of `vocab_size` tokens.
pub fn bench_model(vocab_size: usize, max_tokens: usize) -> Result<ToyModel> {
    if vocab_size < 3 {
        return Err(Error::invalid("bench vocabulary needs at least three tokens"));
    }
    let vocab: Vec<String> = std::iter::once("<eos>".to_string())
        .chain((1..vocab_size).map(|i| format!("w{i} ")))
        .collect();
    let mut probs: Vec<f64> = (0..vocab_size).map(|i| 1.0 / (i + 2) as f64).collect();
    probs[0] = 1e-3;
    probs[1] *= 4.0;
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let mut b = ToyModel::builder(vocab, "<eos>")?;
    for len in 0..max_tokens {
        b = b.rule(PromptMatch::Any, ImageMatch::Any, &vec![1; len], probs.clone())?;
    }
    Ok(b.build())
}

fn digest(trace: &GenerationTrace) -> u64 {
    let mut h = StableHasher::new();
    for &t in &trace.tokens {
        h.u64(t as u64);
    }
    for step in trace.per_step_distributions.iter().flatten() {
        for row in step {
            for p in row {
                h.u64(p.to_bits());
            }
        }
    }
    h.finish()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Branch inputs for the benchmark query.
pub fn bench_inputs(n: usize, settings: &BenchSettings) -> Result<Vec<AugmentedInput>> {
    let cfg = GenerationConfig {
        n_aug: n,
        modality: Modality::Text,
        ..Default::default()
    };
    let prompts = if n == 1 {
        vec![settings.prompt.clone()]
    } else {
        augment_prompts(&settings.prompt, n, &cfg, None, settings.seed)?
    };
    prompts
        .into_iter()
        .enumerate()
        .map(|(i, p)| AugmentedInput::new("bench", i, p, None))
        .collect()
}

/// Times TTAug decoding of one query for every `n` and mode.
pub fn bench_overhead(
    g: &dyn Generator,
    n_aug_list: &[usize],
    modes: BenchModes,
    settings: &BenchSettings,
) -> Result<Vec<OverheadReport>> {
    if n_aug_list.contains(&0) {
        return Err(Error::invalid("n_aug values must be >= 1"));
    }
    let eos = g.eos_token().unwrap_or(0);
    let mut reports = Vec::new();
    for &n in n_aug_list {
        let inputs = bench_inputs(n, settings)?;
        let cfg = GenerationConfig {
            n_aug: n,
            max_tokens: settings.max_tokens,
            eos_token: eos,
            seed: settings.seed,
            ..Default::default()
        };
        for mode in modes.modes() {
            let opts = DecodeOptions::recording(mode);
            // Warm-up run, also the reference trace.
            let trace = generate_with(g, &inputs, &cfg, opts)?;
            let mut times = Vec::with_capacity(settings.repeats.max(1));
            reset_peak();
            for _ in 0..settings.repeats.max(1) {
                let start = Instant::now();
                let t = generate_with(g, &inputs, &cfg, DecodeOptions { mode, record: false })?;
                times.push(start.elapsed().as_secs_f64());
                std::hint::black_box(t);
            }
            reports.push(OverheadReport {
                n_aug: n,
                mode,
                peak_memory_bytes: peak_bytes(),
                wall_time_s_per_query: median(times),
                trace_digest: digest(&trace),
            });
        }
    }
    Ok(reports)
}

pub fn overhead_csv(reports: &[OverheadReport]) -> String {
    let mut out = String::from("n_aug,mode,peak_memory_bytes,wall_time_s_per_query\n");
    for r in reports {
        let mode = match r.mode {
            ExecutionMode::Parallel => "parallel",
            ExecutionMode::Sequential => "sequential",
        };
        out.push_str(&format!(
            "{},{},{},{:.9}\n",
            r.n_aug, mode, r.peak_memory_bytes, r.wall_time_s_per_query
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bench_model_runs_to_the_limit() {
        let g = bench_model(64, 8).unwrap();
        let inputs = bench_inputs(3, &BenchSettings::default()).unwrap();
        let cfg = GenerationConfig { n_aug: 3, max_tokens: 8, ..Default::default() };
        let t = generate_with(&g, &inputs, &cfg, DecodeOptions::default()).unwrap();
        assert_eq!(t.tokens, vec![1; 8]);
    }

    #[test]
    fn modes_agree() {
        let g = bench_model(64, 8).unwrap();
        let settings = BenchSettings { max_tokens: 8, repeats: 1, ..Default::default() };
        let r = bench_overhead(&g, &[1, 4], BenchModes::Both, &settings).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r[0].trace_digest, r[1].trace_digest);
        assert_eq!(r[2].trace_digest, r[3].trace_digest);
        assert!(bench_overhead(&g, &[0], BenchModes::Both, &settings).is_err());
        assert!(overhead_csv(&r).starts_with("n_aug,mode,peak_memory_bytes,wall_time_s_per_query\n1,parallel,"));
    }
}
