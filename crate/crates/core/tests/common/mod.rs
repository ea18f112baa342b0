#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use vlm_tts::cli::{Method, ModelSource, RunConfig};
use vlm_tts::generator::ToyModel;
use vlm_tts::types::{AugmentedInput, GenerationConfig};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_model() -> ToyModel {
    ToyModel::from_spec_file(&fixtures().join("toy_model.json")).unwrap()
}

/// Run config over the 20-record fixture, writing into `out`.
pub fn fixture_run(method: Method, generation: GenerationConfig, out: PathBuf) -> RunConfig {
    RunConfig {
        method,
        generation,
        adapt: None,
        weight_opt: None,
        dataset_path: "toy_dataset.jsonl".into(),
        model: ModelSource::Toy {
            spec_path: "toy_model.json".into(),
        },
        sample_k: 1000,
        output_dir: out,
        benchmark: None,
        candidates: Default::default(),
        temperature: 1.0,
        execution: Default::default(),
        base_dir: fixtures(),
    }
}

pub fn text_inputs(prompts: &[&str]) -> Vec<AugmentedInput> {
    prompts
        .iter()
        .enumerate()
        .map(|(i, p)| AugmentedInput::new("q", i, *p, None).unwrap())
        .collect()
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlm_tts::types::TokenId;

pub const ORACLE_VOCAB: usize = 4;
pub const ORACLE_DEPTH: usize = 3;

/// Every token sequence of length `0..=depth` over `vocab` tokens.
pub fn all_prefixes(vocab: usize, depth: usize) -> Vec<Vec<TokenId>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for p in &frontier {
            for t in 0..vocab as TokenId {
                let mut q: Vec<TokenId> = p.clone();
                q.push(t);
                next.push(q);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub fn random_row(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3) + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Toy model over `<eos>, a, b, c` with a random row for every branch
/// prompt and every prefix up to the oracle depth.
pub fn random_model(seed: u64, prompts: &[&str], layers: usize) -> ToyModel {
    let vocab: Vec<String> = ["<eos>", "a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ToyModel::builder(vocab, "<eos>").unwrap().layers(layers);
    for p in prompts {
        for prefix in all_prefixes(ORACLE_VOCAB, ORACLE_DEPTH) {
            b = b.row(p, 0, &prefix, random_row(&mut rng, ORACLE_VOCAB)).unwrap();
        }
    }
    b.build()
}
