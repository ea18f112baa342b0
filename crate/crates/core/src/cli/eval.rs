//! End-to-end evaluation of one method over a dataset.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use image::RgbImage;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{CandidateSource, Method, RunConfig};
use crate::adapt::{ttadapt_answer, ttadapt_weights_generate};
use crate::baselines::{sample_and_rank, self_consistency, self_select, self_synthesize, temperature_sample};
use crate::decoder::{generate_with, greedy_generate, DecodeOptions};
use crate::error::{Error, Result};
use crate::evalkit::{aggregate_csv, load_dataset, mean_score, score_record, uniform_interval_sample, AggregateRow};
use crate::generator::text::detokenize;
use crate::generator::Generator;
use crate::inputs::{build_inputs, original_input};
use crate::textaug::GeneratorParaphraser;
use crate::types::{derive_seed, AugmentedInput, GenerationConfig, MetricResult, QuestionRecord, TextStrategy, TokenId};

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// Temperature for paraphrase retries.
const PARAPHRASE_RETRY_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub benchmark: String,
    pub method: String,
    pub results: Vec<MetricResult>,
    pub mean_score: f64,
    /// Records that could not be processed; they score 0.
    pub failures: usize,
}

impl EvalReport {
    pub fn aggregate_row(&self) -> AggregateRow {
        AggregateRow {
            benchmark: self.benchmark.clone(),
            method: self.method.clone(),
            mean_score: self.mean_score,
        }
    }
}

/// Loads the dataset and model named in `cfg`, evaluates, writes outputs.
pub fn run_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let mut g = cfg.model.open(&cfg.base_dir)?;
    run_eval_with(cfg, g.as_mut())
}

/// [`run_eval`] with an already-open generator.
pub fn run_eval_with(cfg: &RunConfig, g: &mut dyn Generator) -> Result<EvalReport> {
    cfg.validate()?;
    let gen = generation_config(cfg, g)?;
    let dataset_path = cfg.resolve(&cfg.dataset_path);
    let records = load_dataset(&dataset_path)?;
    let picks = uniform_interval_sample(records.len(), cfg.sample_k.min(records.len()))?;
    let chosen: Vec<&QuestionRecord> = picks.iter().map(|&i| &records[i]).collect();
    let image_dir = dataset_path.parent().map(Path::to_path_buf).unwrap_or_default();

    let results: Vec<MetricResult> = if cfg.method == Method::TtadaptParams {
        // Parameter adaptation mutates the model, so questions run in turn.
        chosen
            .iter()
            .map(|rec| score(rec, answer_mut(cfg, &gen, &mut *g, rec, &image_dir)))
            .collect()
    } else {
        let shared: &dyn Generator = g;
        chosen
            .par_iter()
            .map(|rec| score(rec, answer(cfg, &gen, shared, rec, &image_dir)))
            .collect()
    };

    let report = EvalReport {
        benchmark: cfg.benchmark_name(),
        method: cfg.method.as_str().to_string(),
        mean_score: mean_score(&results),
        failures: results.iter().filter(|r| r.error.is_some()).count(),
        results,
    };
    write_outputs(&cfg.resolve(&cfg.output_dir), &report)?;
    Ok(report)
}

/// Generation settings with the model's EOS checked against the config.
fn generation_config(cfg: &RunConfig, g: &dyn Generator) -> Result<GenerationConfig> {
    let gen = cfg.generation.clone();
    if let Some(eos) = g.eos_token() {
        if eos != gen.eos_token {
            return Err(Error::InvalidConfig(format!(
                "generation.eos_token is {} but the model's EOS id is {eos}",
                gen.eos_token
            )));
        }
    }
    Ok(gen)
}

fn score(rec: &QuestionRecord, outcome: Result<String>) -> MetricResult {
    match outcome {
        Ok(pred) => score_record(rec, &pred),
        Err(e) => MetricResult {
            id: rec.id.clone(),
            score: 0.0,
            metric_name: score_record(rec, "").metric_name,
            prediction: String::new(),
            error: Some(e.to_string()),
        },
    }
}

pub fn write_outputs(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut lines = Vec::new();
    for r in &report.results {
        serde_json::to_writer(&mut lines, r)?;
        lines.write_all(b"\n")?;
    }
    fs::write(dir.join(PREDICTIONS_FILE), lines)?;
    fs::write(dir.join(AGGREGATE_FILE), aggregate_csv(&[report.aggregate_row()]))?;
    Ok(())
}

pub fn load_record_image(rec: &QuestionRecord, base: &Path) -> Result<Option<Arc<RgbImage>>> {
    match &rec.image_path {
        None => Ok(None),
        Some(p) => {
            let path = base.join(p);
            let img = image::open(&path)
                .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
                .to_rgb8();
            Ok(Some(Arc::new(img)))
        }
    }
}

/// Per-question seed; independent of every other record.
pub fn question_seed(cfg: &GenerationConfig, rec: &QuestionRecord) -> u64 {
    derive_seed(cfg.seed, &rec.id)
}

fn text_of(g: &dyn Generator, tokens: &[TokenId], eos: TokenId) -> String {
    detokenize(g.vocab(), tokens, Some(eos)).trim().to_string()
}

/// The decoded branch inputs and the untouched question.
pub fn question_inputs(
    gen: &GenerationConfig,
    g: &dyn Generator,
    rec: &QuestionRecord,
    image_dir: &Path,
) -> Result<(AugmentedInput, Vec<AugmentedInput>)> {
    let image = load_record_image(rec, image_dir)?;
    let seed = question_seed(gen, rec);
    let paraphraser = GeneratorParaphraser {
        generator: g,
        eos: gen.eos_token,
        max_tokens: gen.max_tokens,
        retry_temperature: PARAPHRASE_RETRY_TEMPERATURE,
        seed: derive_seed(seed, "paraphraser"),
    };
    let p = (gen.text_strategy == TextStrategy::SelfParaphrase).then_some(&paraphraser as _);
    let inputs = build_inputs(&rec.id, &rec.prompt, image.clone(), gen, p, seed)?;
    Ok((original_input(&rec.id, &rec.prompt, image)?, inputs))
}

fn branch_config(gen: &GenerationConfig, inputs: &[AugmentedInput]) -> GenerationConfig {
    GenerationConfig {
        n_aug: inputs.len(),
        ..gen.clone()
    }
}

fn answer(
    cfg: &RunConfig,
    gen: &GenerationConfig,
    g: &dyn Generator,
    rec: &QuestionRecord,
    image_dir: &Path,
) -> Result<String> {
    let opts = DecodeOptions {
        mode: cfg.execution,
        record: false,
    };
    if cfg.method == Method::Baseline {
        let original = original_input(&rec.id, &rec.prompt, load_record_image(rec, image_dir)?)?;
        let trace = greedy_generate(g, &original, gen)?;
        return Ok(text_of(g, &trace.tokens, gen.eos_token));
    }
    let (original, inputs) = question_inputs(gen, g, rec, image_dir)?;
    let bc = branch_config(gen, &inputs);
    match cfg.method {
        Method::Baseline | Method::TtadaptParams => unreachable!("handled by the caller"),
        Method::Ttaug => Ok(text_of(g, &generate_with(g, &inputs, &bc, opts)?.tokens, gen.eos_token)),
        Method::TtadaptWeights => {
            let wo = cfg.weight_opt.as_ref().expect("validated");
            let trace = ttadapt_weights_generate(g, &inputs, &bc, wo, opts)?;
            Ok(text_of(g, &trace.tokens, gen.eos_token))
        }
        Method::SelfConsistency | Method::SelfSelector | Method::SampleAndRank | Method::SelfSynthesizer => {
            let cands = candidates(cfg, gen, g, &original, &inputs, question_seed(gen, rec))?;
            let texts: Vec<String> = cands.iter().map(|c| c.0.clone()).collect();
            match cfg.method {
                Method::SelfConsistency => self_consistency(&texts),
                Method::SampleAndRank => sample_and_rank(&cands),
                Method::SelfSelector => Ok(texts[self_select(g, &original, &texts, gen.eos_token)?].clone()),
                _ => self_synthesize(g, &original, &texts, gen),
            }
        }
    }
}

fn answer_mut(
    cfg: &RunConfig,
    gen: &GenerationConfig,
    g: &mut dyn Generator,
    rec: &QuestionRecord,
    image_dir: &Path,
) -> Result<String> {
    let (_, inputs) = question_inputs(gen, &*g, rec, image_dir)?;
    let bc = branch_config(gen, &inputs);
    let adapt = cfg.adapt.as_ref().expect("validated");
    let outcome = ttadapt_answer(g, &inputs, &bc, adapt)?;
    Ok(text_of(&*g, &outcome.trace.tokens, gen.eos_token))
}

/// Per-token log-probabilities of `tokens` under teacher forcing.
pub fn token_log_probs(g: &dyn Generator, input: &AugmentedInput, tokens: &[TokenId]) -> Result<Vec<f64>> {
    (0..tokens.len())
        .map(|j| Ok(g.step(input, &tokens[..j])?.get(tokens[j]).ln()))
        .collect()
}

/// Candidate answers with their per-token log-probabilities.
fn candidates(
    cfg: &RunConfig,
    gen: &GenerationConfig,
    g: &dyn Generator,
    original: &AugmentedInput,
    inputs: &[AugmentedInput],
    seed: u64,
) -> Result<Vec<(String, Vec<f64>)>> {
    match cfg.candidates {
        CandidateSource::Augmented => inputs
            .iter()
            .map(|x| {
                let trace = greedy_generate(g, x, gen)?;
                let lp = token_log_probs(g, x, &trace.tokens)?;
                Ok((text_of(g, &trace.tokens, gen.eos_token), lp))
            })
            .collect(),
        CandidateSource::Temperature => (0..gen.n_aug)
            .map(|i| {
                let s = temperature_sample(g, original, cfg.temperature, gen, derive_seed(seed, &format!("sample/{i}")))?;
                Ok((text_of(g, &s.trace.tokens, gen.eos_token), s.token_log_probs))
            })
            .collect(),
    }
}
