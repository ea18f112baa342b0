//! Acceptance suite. Prints one PASS or FAIL line per criterion with its
//! measured runtime against the pinned limit, and exits non-zero on any
//! failure.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::oracle::{self, RULES};
use common::{all_prefixes, fixture_model, fixture_run, fixtures, random_model, random_row, text_inputs};
use vlm_tts::adapt::{entropy_gradient, fine_tune, marginal_entropy, optimize_step, ttadapt_answer};
use vlm_tts::adapt::{AdaptConfig, WeightOptConfig};
use vlm_tts::cli::eval::question_inputs;
use vlm_tts::cli::{bench_model, bench_overhead, run_eval, BenchModes, BenchSettings, Method};
use vlm_tts::decoder::{
    aggregate_average, aggregate_entropy_weighted, aggregate_majority, aggregate_most_confident, generate_with,
    greedy_generate, ttaug_generate, DecodeOptions, ExecutionMode, StepMatrix,
};
use vlm_tts::evalkit::*;
use vlm_tts::generator::{sequence_log_prob, Generator};
use vlm_tts::theory::{self, ChainParams};
use vlm_tts::types::{Aggregation, AugmentedInput, Choice, GenerationConfig, Layer, Modality, QuestionRecord, TaskKind};
use vlm_tts::Error;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "aggregation rules", limit: Duration::from_secs(10), run: aggregation_rules },
        Criterion { name: "decoder oracle", limit: Duration::from_secs(30), run: decoder_oracle },
        Criterion { name: "early-layer consistency", limit: Duration::from_secs(30), run: early_layer },
        Criterion { name: "theory", limit: Duration::from_secs(120), run: theory_checks },
        Criterion { name: "weight optimization", limit: Duration::from_secs(30), run: weight_optimization },
        Criterion { name: "adaptation contract", limit: Duration::from_secs(30), run: adaptation_contract },
        Criterion { name: "metrics", limit: Duration::from_secs(300), run: metrics },
        Criterion { name: "end-to-end fixture", limit: Duration::from_secs(60), run: end_to_end },
        Criterion { name: "overhead shape", limit: Duration::from_secs(120), run: overhead_shape },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > c.limit => Err("runtime limit exceeded".to_string()),
            other => other,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        failed += usize::from(outcome.is_err());
        println!(
            "{status} {:<24} {:>7.2}s / {:>3}s  {detail}",
            c.name,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Random rows, sometimes coarsely quantized so that ties occur.
fn random_rows(rng: &mut ChaCha8Rng, n: usize, v: usize) -> Vec<Vec<f64>> {
    let quantized = rng.random_bool(0.3);
    (0..n)
        .map(|_| {
            if quantized {
                let counts: Vec<f64> = (0..v).map(|_| rng.random_range(0..3) as f64).collect();
                let total: f64 = counts.iter().sum();
                if total == 0.0 {
                    vec![1.0 / v as f64; v]
                } else {
                    counts.iter().map(|c| c / total).collect()
                }
            } else {
                random_row(rng, v)
            }
        })
        .collect()
}

fn aggregation_rules() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let instances = 2000;
    for case in 0..instances {
        let n = rng.random_range(1..=8);
        let v = rng.random_range(2..=32);
        let rows = random_rows(&mut rng, n, v);
        let m = StepMatrix::from_probs(rows.clone()).map_err(|e| e.to_string())?;
        let avg = aggregate_average(&m).unwrap().into_inner();
        let ent = aggregate_entropy_weighted(&m).unwrap().into_inner();
        let maj = aggregate_majority(&m);
        let conf = aggregate_most_confident(&m);

        for d in [&avg, &ent] {
            ensure!(d.len() == v && d.iter().all(|&p| p >= 0.0), "case {case}: invalid aggregate");
            ensure!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9, "case {case}: aggregate not normalized");
        }
        ensure!((maj as usize) < v && (conf as usize) < v, "case {case}: token out of range");

        ensure!(close(&avg, &oracle::step(&rows, Aggregation::Average).1.unwrap(), 1e-12), "case {case}: average");
        let want = oracle::step(&rows, Aggregation::EntropyWeighted).1.unwrap();
        ensure!(close(&ent, &want, 1e-12), "case {case}: entropy-weighted");
        ensure!(maj == oracle::step(&rows, Aggregation::Majority).0, "case {case}: majority");
        ensure!(conf == oracle::step(&rows, Aggregation::MostConfident).0, "case {case}: most-confident");

        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        let ms = StepMatrix::from_probs(shuffled).unwrap();
        ensure!(close(&aggregate_average(&ms).unwrap().into_inner(), &avg, 1e-12), "case {case}: average order");
        ensure!(
            close(&aggregate_entropy_weighted(&ms).unwrap().into_inner(), &ent, 1e-12),
            "case {case}: entropy-weighted order"
        );
        ensure!(aggregate_majority(&ms) == maj, "case {case}: majority order");
        ensure!(aggregate_most_confident(&ms) == conf, "case {case}: most-confident order");

        let one = StepMatrix::from_probs(vec![rows[0].clone()]).unwrap();
        ensure!(close(&aggregate_average(&one).unwrap().into_inner(), &rows[0], 1e-15), "case {case}: N=1 average");
        ensure!(
            close(&aggregate_entropy_weighted(&one).unwrap().into_inner(), &rows[0], 1e-15),
            "case {case}: N=1 entropy-weighted"
        );
        let top = oracle::first_max(&rows[0]) as u32;
        ensure!(aggregate_majority(&one) == top && aggregate_most_confident(&one) == top, "case {case}: N=1 vote");

        // Permutations of one row share its entropy.
        let base = random_row(&mut rng, v);
        let equal: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r = base.clone();
                r.shuffle(&mut rng);
                r
            })
            .collect();
        let me = StepMatrix::from_probs(equal).unwrap();
        ensure!(
            close(
                &aggregate_entropy_weighted(&me).unwrap().into_inner(),
                &aggregate_average(&me).unwrap().into_inner(),
                1e-9
            ),
            "case {case}: equal-entropy rows"
        );
    }
    Ok(format!("{instances} random matrices"))
}

const PROMPTS: [&str; 4] = ["p0", "p1", "p2", "p3"];

fn oracle_cfg(n: usize, rule: Aggregation) -> GenerationConfig {
    GenerationConfig {
        n_aug: n,
        aggregation: rule,
        max_tokens: common::ORACLE_DEPTH,
        eos_token: 0,
        ..Default::default()
    }
}

fn decoder_oracle() -> Outcome {
    let models = 40;
    let mut runs = 0;
    for seed in 0..models {
        let g = random_model(seed, &PROMPTS, 4);
        for n in 1..=4 {
            let inputs = text_inputs(&PROMPTS[..n]);
            for rule in RULES {
                let cfg = oracle_cfg(n, rule);
                let seq = generate_with(&g, &inputs, &cfg, DecodeOptions::recording(ExecutionMode::Sequential))
                    .map_err(|e| e.to_string())?;
                let par = generate_with(&g, &inputs, &cfg, DecodeOptions::recording(ExecutionMode::Parallel))
                    .map_err(|e| e.to_string())?;
                let want = oracle::path(&g, &inputs, rule);
                ensure!(seq.tokens == want, "model {seed}, N={n}, {rule:?}: {:?} vs {want:?}", seq.tokens);
                ensure!(seq.same_output(&par), "model {seed}, N={n}, {rule:?}: modes differ");
                let plain = ttaug_generate(&g, &inputs, &cfg).map_err(|e| e.to_string())?;
                ensure!(plain.tokens == want, "model {seed}, N={n}, {rule:?}: ttaug_generate");
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} decodes over {models} random models"))
}

fn early_layer() -> Outcome {
    let mut checks = 0usize;
    for seed in 0..12u64 {
        let layers = 1 + seed as usize % 6;
        let g = random_model(500 + seed, &PROMPTS, layers);
        let inputs = text_inputs(&PROMPTS);
        for x in &inputs {
            for prefix in all_prefixes(common::ORACLE_VOCAB, common::ORACLE_DEPTH) {
                let direct = g.step(x, &prefix).unwrap();
                for l in 1..=layers {
                    let h = g.step_hidden(x, &prefix, l).map_err(|e| e.to_string())?;
                    let resumed = g.resume_from_hidden(&h, l).map_err(|e| e.to_string())?;
                    ensure!(resumed == direct, "model {seed}, layer {l}, prefix {prefix:?}");
                    checks += 1;
                }
            }
        }
        for x in &inputs {
            let base = greedy_generate(&g, x, &oracle_cfg(1, Aggregation::Average)).unwrap();
            for copies in 2..=4 {
                let branches: Vec<AugmentedInput> = vec![x.clone(); copies];
                for l in 1..=layers {
                    for rule in [Aggregation::Average, Aggregation::EntropyWeighted] {
                        let cfg = GenerationConfig {
                            layer: Layer::Index(l),
                            ..oracle_cfg(copies, rule)
                        };
                        let t = generate_with(&g, &branches, &cfg, DecodeOptions::default()).unwrap();
                        ensure!(t.tokens == base.tokens, "model {seed}, layer {l}, {copies} copies, {rule:?}");
                    }
                }
            }
        }
    }
    Ok(format!("{checks} hidden round trips"))
}

fn theory_checks() -> Outcome {
    ensure!(theory::k_n(1) == 0.0, "k_1 = {}", theory::k_n(1));
    let k2 = theory::k_n(2);
    ensure!((k2 - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-6, "k_2 = {k2}");
    let mut worst: f64 = 0.0;
    for n in [4, 16, 64] {
        let est = theory::mc_k_n(n, 10_000_000, 7);
        let z = est.z_score(theory::k_n(n));
        worst = worst.max(z);
        ensure!(z <= 3.0, "k_{n}: quadrature {} vs sample mean {} (z = {z:.2})", theory::k_n(n), est.mean);
    }
    let (p, delta, n) = (0.8, 0.125, 4);
    let s = theory::feasible_selector_accuracy(p, n, delta).map_err(|e| e.to_string())?;
    for t in [1, 3, 11, 30] {
        let cp = ChainParams {
            delta,
            ..ChainParams::uniform(p, s, 1.0, n, t)
        };
        let sim = theory::simulate_chain(&cp, 1_000_000, 11).map_err(|e| e.to_string())?;
        let (pt, pa) = (theory::p_token(&cp).unwrap(), theory::p_answer(&cp).unwrap());
        let (zt, za) = (sim.token.z_score(pt), sim.answer.z_score(pa));
        worst = worst.max(zt).max(za);
        ensure!(zt <= 3.0 && za <= 3.0, "T={t}: token z {zt:.2}, answer z {za:.2}");
    }
    let t = theory::theorem_check(p, delta, n, 1.0, 30).map_err(|e| e.to_string())?;
    ensure!(t <= 30, "crossover at {t}");
    Ok(format!("crossover T={t}, worst z {worst:.2}"))
}

fn weight_optimization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let eps = WeightOptConfig::default().entropy_eps;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = rng.random_range(2..=8);
        let v = rng.random_range(2..=16);
        let m = StepMatrix::from_probs((0..n).map(|_| random_row(&mut rng, v)).collect()).unwrap();
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let g = entropy_gradient(&w, &m, eps).unwrap();
        let fd: Vec<f64> = (0..n)
            .map(|i| {
                let (mut hi, mut lo) = (w.clone(), w.clone());
                hi[i] += h;
                lo[i] -= h;
                (marginal_entropy(&hi, &m, eps).unwrap() - marginal_entropy(&lo, &m, eps).unwrap()) / (2.0 * h)
            })
            .collect();
        let scale = fd.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let err = g.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let rel = err / scale.max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        ensure!(rel <= 1e-5, "case {case}: relative error {rel:e}");
    }
    let cfg = WeightOptConfig {
        micro_steps: 200,
        ..Default::default()
    };
    let m = StepMatrix::from_probs(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
    let s = optimize_step(&m, &cfg).map_err(|e| e.to_string())?;
    ensure!(s.weights[0] > 0.9, "weight on the deterministic row {}", s.weights[0]);
    ensure!(s.final_entropy < s.initial_entropy, "entropy {} -> {}", s.initial_entropy, s.final_entropy);
    Ok(format!(
        "worst gradient error {worst:.1e}, fixture weight {:.3}",
        s.weights[0]
    ))
}

fn fixture_inputs(g: &dyn Generator, gen: &GenerationConfig) -> Vec<(QuestionRecord, Vec<AugmentedInput>)> {
    let records = load_dataset(fixtures().join("toy_dataset.jsonl")).unwrap();
    records
        .into_iter()
        .map(|r| {
            let (_, inputs) = question_inputs(gen, g, &r, &fixtures()).unwrap();
            (r, inputs)
        })
        .collect()
}

fn adaptation_contract() -> Outcome {
    let gen = GenerationConfig {
        n_aug: 4,
        max_tokens: 4,
        ..Default::default()
    };
    let mut g = fixture_model();
    let mut rises = 0;
    for (rec, inputs) in fixture_inputs(&g, &gen) {
        let id = &rec.id;
        let consensus = ttaug_generate(&g, &inputs, &gen).map_err(|e| e.to_string())?;
        let single = AdaptConfig {
            pseudo_iterations: 1,
            ..Default::default()
        };
        let out = ttadapt_answer(&mut g, &inputs, &gen, &single).map_err(|e| e.to_string())?;
        ensure!(out.trace.tokens == consensus.tokens, "{id}: one iteration differs from TTAug");

        let label = consensus.tokens.clone();
        let likelihood = |g: &dyn Generator| -> f64 {
            inputs.iter().map(|x| sequence_log_prob(g, x, &label).unwrap()).sum()
        };
        for lr in [AdaptConfig::default().learning_rate, 1e-2] {
            let cfg = AdaptConfig {
                learning_rate: lr,
                ..Default::default()
            };
            let mut tuned = g.clone();
            let before = likelihood(&tuned);
            fine_tune(tuned.as_trainable().unwrap(), &inputs, &label, &cfg).map_err(|e| e.to_string())?;
            let after = likelihood(&tuned);
            ensure!(after >= before, "{id}, lr {lr}: pseudolabel log-likelihood {before} -> {after}");
            rises += usize::from(after > before);
        }

        let probe: Vec<_> = inputs
            .iter()
            .flat_map(|x| (0..=label.len()).map(move |j| (x, j)))
            .map(|(x, j)| g.step(x, &label[..j]).unwrap())
            .collect();
        let cfg = AdaptConfig {
            learning_rate: 1e-2,
            ..Default::default()
        };
        let out = ttadapt_answer(&mut g, &inputs, &gen, &cfg).map_err(|e| e.to_string())?;
        ensure!(out.losses.len() == 2, "{id}: expected two training rounds");
        let again: Vec<_> = inputs
            .iter()
            .flat_map(|x| (0..=label.len()).map(move |j| (x, j)))
            .map(|(x, j)| g.step(x, &label[..j]).unwrap())
            .collect();
        ensure!(probe == again, "{id}: weights not restored bitwise");
    }
    Ok(format!("20 questions, likelihood rose in {rises} of 40 fine-tunes"))
}

fn rec(task: TaskKind, answers: &[&str]) -> QuestionRecord {
    QuestionRecord {
        id: "r".into(),
        image_path: None,
        prompt: "q".into(),
        answers: answers.iter().map(|s| s.to_string()).collect(),
        task,
        choices: None,
        math: false,
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn metric_examples() -> Outcome {
    ensure!(uniform_interval_sample(10, 5).unwrap() == vec![0, 2, 4, 6, 8], "sample 10/5");
    ensure!(uniform_interval_sample(7, 3).unwrap() == vec![0, 2, 4], "sample 7/3");
    ensure!(uniform_interval_sample(6, 6).unwrap() == (0..6).collect::<Vec<_>>(), "sample k=M");
    ensure!(matches!(uniform_interval_sample(3, 4), Err(Error::KExceedsM { .. })), "sample k>M");

    ensure!(normalize_text("  A  Cat\n") == "a cat", "normalize");
    ensure!(normalize_text("").is_empty() && normalize_text("x") == "x", "normalize fixed points");

    ensure!(exact_match("Cat", &strings(&["cat"])) == 1.0, "exact Cat");
    ensure!(exact_match("cats", &strings(&["cat"])) == 0.0, "exact cats");
    ensure!(exact_match("", &strings(&[""])) == 1.0, "exact empty");

    let annotators = strings(&["red", "red", "red", "blue", "maroon"]);
    ensure!(vqa_score("Red", &annotators) == 1.0, "vqa 3 matches");
    ensure!((vqa_score("blue", &annotators) - 1.0 / 3.0).abs() < 1e-15, "vqa 1 match");
    ensure!(vqa_score("green", &annotators) == 0.0, "vqa 0 matches");

    ensure!(relaxed_match("10.2", &strings(&["10.0"])) == 1.0, "relaxed 10.2");
    ensure!(relaxed_match("10.6", &strings(&["10.0"])) == 0.0, "relaxed 10.6");
    ensure!(relaxed_match("5%", &strings(&["0.05"])) == 1.0, "relaxed percent");
    ensure!(relaxed_match("0", &strings(&["0"])) == 1.0, "relaxed zero");
    ensure!(relaxed_match("0.001", &strings(&["0"])) == 0.0, "relaxed near zero");

    ensure!(substring_match("total is 71.10", &strings(&["71.10"]), false) == 1.0, "substring");
    ensure!(substring_match("71 . 10", &strings(&["71.10"]), true) == 1.0, "substring math");
    ensure!(substring_match("total", &strings(&["71.10"]), false) == 0.0, "substring miss");

    ensure!(mcq_extract("The answer is (C).") == Some('C'), "mcq (C)");
    ensure!(mcq_extract("B") == Some('B'), "mcq B");
    ensure!(mcq_extract("cabbage").is_none(), "mcq cabbage");

    ensure!((rouge_l("a b c", &strings(&["a c"])) - 0.8).abs() < 1e-12, "rouge 0.8");
    ensure!(rouge_l("the red bus", &strings(&["the red bus"])) == 1.0, "rouge identical");
    ensure!(rouge_l("a b", &strings(&["c d"])) == 0.0, "rouge disjoint");

    let mut mcq = rec(TaskKind::Mcq, &["A"]);
    mcq.choices = Some(vec![
        Choice { label: "A".into(), text: "cat".into() },
        Choice { label: "B".into(), text: "dog".into() },
    ]);
    ensure!(score_record(&mcq, "A").score == 1.0, "mcq record");
    let caption = rec(TaskKind::Caption, &["a red bus on a street"]);
    let want = rouge_l("a red bus", &caption.answers);
    ensure!(score_record(&caption, "a red bus").score == want, "caption dispatch");
    ensure!(
        matches!(score_with_task("haiku", &caption, "x"), Err(Error::UnknownTask(_))),
        "unknown task"
    );
    Ok(String::new())
}

/// Every sequence of length `0..=max_len` over `symbols`, shortest first.
/// For each, its distinct subsequences both as indices, longest first, and as
/// a bit set over the same indexing.
struct Sequences {
    items: Vec<Vec<u8>>,
    subsequences: Vec<Vec<u16>>,
    members: Vec<Vec<u64>>,
}

impl Sequences {
    fn new(symbols: u8, max_len: usize) -> Self {
        let mut items: Vec<Vec<u8>> = vec![Vec::new()];
        let mut start = 0;
        for _ in 0..max_len {
            let end = items.len();
            for i in start..end {
                for s in 0..symbols {
                    let mut q = items[i].clone();
                    q.push(s);
                    items.push(q);
                }
            }
            start = end;
        }
        let index: std::collections::HashMap<Vec<u8>, u16> =
            items.iter().enumerate().map(|(i, s)| (s.clone(), i as u16)).collect();
        let words = items.len().div_ceil(64);
        let mut subsequences = Vec::with_capacity(items.len());
        let mut members = Vec::with_capacity(items.len());
        for s in &items {
            let mut ids: Vec<u16> = (0u32..(1 << s.len()))
                .map(|mask| {
                    let sub: Vec<u8> = (0..s.len()).filter(|&k| mask >> k & 1 == 1).map(|k| s[k]).collect();
                    index[&sub]
                })
                .collect();
            ids.sort_unstable_by(|a, b| b.cmp(a));
            ids.dedup();
            let mut bits = vec![0u64; words];
            for &id in &ids {
                bits[id as usize / 64] |= 1 << (id % 64);
            }
            subsequences.push(ids);
            members.push(bits);
        }
        Self {
            items,
            subsequences,
            members,
        }
    }

    /// Length of the longest sequence that is a subsequence of both.
    fn common(&self, a: usize, b: usize) -> usize {
        let other = &self.members[b];
        self.subsequences[a]
            .iter()
            .find(|&&id| other[id as usize / 64] >> (id % 64) & 1 == 1)
            .map_or(0, |&id| self.items[id as usize].len())
    }
}

fn metrics() -> Outcome {
    metric_examples()?;
    let seqs = Sequences::new(3, 8);
    let text: Vec<String> = seqs
        .items
        .iter()
        .map(|s| s.iter().map(|&c| ["x", "y", "z"][c as usize]).collect::<Vec<_>>().join(" "))
        .collect();
    let refs: Vec<Vec<String>> = text.iter().map(|t| vec![t.clone()]).collect();
    let mut pairs = 0u64;
    for (a, pred) in text.iter().enumerate() {
        for (b, r) in refs.iter().enumerate() {
            let lcs = seqs.common(a, b) as f64;
            let want = if lcs == 0.0 {
                0.0
            } else {
                let (p, rc) = (lcs / seqs.items[a].len() as f64, lcs / seqs.items[b].len() as f64);
                2.0 * p * rc / (p + rc)
            };
            let got = rouge_l(pred, r);
            ensure!((got - want).abs() <= 1e-12, "rouge_l({pred:?}, {:?}) = {got}, LCS oracle {want}", r[0]);
            pairs += 1;
        }
    }
    Ok(format!("hand examples and {pairs} exhaustive pairs"))
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ttaug = GenerationConfig {
        n_aug: 4,
        max_tokens: 4,
        ..Default::default()
    };
    let run = |method: Method, gen: GenerationConfig, name: &str| {
        run_eval(&fixture_run(method, gen, dir.path().join(name))).map_err(|e| e.to_string())
    };
    let base = run(Method::Baseline, ttaug.clone(), "baseline")?;
    let aug = run(Method::Ttaug, ttaug.clone(), "ttaug")?;
    let single = run(Method::Ttaug, GenerationConfig { n_aug: 1, ..ttaug.clone() }, "single")?;
    let none = run(
        Method::Ttaug,
        GenerationConfig {
            modality: Modality::None,
            ..ttaug.clone()
        },
        "none",
    )?;
    ensure!(base.failures + aug.failures + single.failures + none.failures == 0, "records failed");
    ensure!(aug.mean_score > base.mean_score, "ttaug {} vs baseline {}", aug.mean_score, base.mean_score);
    let gained: HashSet<&str> = aug
        .results
        .iter()
        .zip(&base.results)
        .filter(|(a, b)| a.score > b.score)
        .map(|(a, _)| a.id.as_str())
        .collect();
    let lost = aug.results.iter().zip(&base.results).filter(|(a, b)| a.score < b.score).count();
    ensure!(gained.len() == 5 && lost == 0, "{} records gained, {lost} lost", gained.len());
    for (label, other) in [("N=1", &single), ("modality none", &none)] {
        ensure!(other.mean_score == base.mean_score, "{label}: {} vs {}", other.mean_score, base.mean_score);
        let same = other
            .results
            .iter()
            .zip(&base.results)
            .all(|(a, b)| a.prediction == b.prediction && a.score == b.score);
        ensure!(same, "{label}: predictions differ from baseline");
    }
    Ok(format!("baseline {:.2}, ttaug {:.2}", base.mean_score, aug.mean_score))
}

fn overhead_shape() -> Outcome {
    const MIN_GROWTH: f64 = 4.0 * (1.0 - 0.3);
    let max_tokens = 16;
    let g = bench_model(512, max_tokens).map_err(|e| e.to_string())?;
    let settings = BenchSettings {
        max_tokens,
        repeats: 7,
        ..Default::default()
    };
    let reports = bench_overhead(&g, &[2, 16], BenchModes::Both, &settings).map_err(|e| e.to_string())?;
    for pair in reports.chunks(2) {
        ensure!(pair[0].trace_digest == pair[1].trace_digest, "N={}: mode digests differ", pair[0].n_aug);
    }
    for n in [2, 16] {
        let inputs = vlm_tts::cli::bench::bench_inputs(n, &settings).unwrap();
        let cfg = GenerationConfig {
            n_aug: n,
            max_tokens,
            ..Default::default()
        };
        let a = generate_with(&g, &inputs, &cfg, DecodeOptions::recording(ExecutionMode::Parallel)).unwrap();
        let b = generate_with(&g, &inputs, &cfg, DecodeOptions::recording(ExecutionMode::Sequential)).unwrap();
        ensure!(a.same_output(&b), "N={n}: traces differ across modes");
    }
    let seq = |n: usize| {
        reports
            .iter()
            .find(|r| r.n_aug == n && r.mode == ExecutionMode::Sequential)
            .map(|r| r.wall_time_s_per_query)
            .unwrap()
    };
    let growth = seq(16) / seq(2);
    ensure!(growth >= MIN_GROWTH, "sequential growth {growth:.2}x below {MIN_GROWTH:.1}x");
    Ok(format!("sequential N=16 / N=2 = {growth:.2}x (need {MIN_GROWTH:.1}x)"))
}
