//! Benchmark ingestion, subsampling, answer normalization and scoring.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::types::{read_records_jsonl, MetricResult, QuestionRecord, TaskKind};

/// Relative tolerance of [`relaxed_match`].
pub const RELAXED_TOLERANCE: f64 = 0.05;

/// Loads a JSON Lines benchmark file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<QuestionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::DatasetNotFound(format!("{}: {e}", path.display())))?;
    read_records_jsonl(&text)
}

/// Indices `⌊i·M/k⌋` for `i = 0..k`.
pub fn uniform_interval_sample(m: usize, k: usize) -> Result<Vec<usize>> {
    if k > m {
        return Err(Error::KExceedsM { k, m });
    }
    Ok((0..k).map(|i| i * m / k).collect())
}

/// Lowercases, drops newlines, trims and collapses inner whitespace.
pub fn normalize_text(s: &str) -> String {
    s.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn strip_whitespace(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

pub fn exact_match(pred: &str, answers: &[String]) -> f64 {
    let p = normalize_text(pred);
    indicator(answers.iter().any(|a| normalize_text(a) == p))
}

/// `min(1, matches / 3)`.
pub fn vqa_score(pred: &str, answers: &[String]) -> f64 {
    let p = normalize_text(pred);
    let count = answers.iter().filter(|a| normalize_text(a) == p).count();
    (count as f64 / 3.0).min(1.0)
}

/// Parses a number, accepting a sign, decimals, `,` thousands separators
/// and a trailing `%` (divided by 100).
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let (body, scale) = match s.strip_suffix('%') {
        Some(b) => (b.trim_end(), 0.01),
        None => (s, 1.0),
    };
    let cleaned: String = body.chars().filter(|&c| c != ',').collect();
    if cleaned.is_empty()
        || !cleaned
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
    {
        return None;
    }
    let v: f64 = cleaned.parse().ok()?;
    v.is_finite().then_some(v * scale)
}

/// Numeric comparison within 5% relative error when both sides are numbers,
/// exact normalized match otherwise.
pub fn relaxed_match(pred: &str, answers: &[String]) -> f64 {
    let p = normalize_text(pred);
    let pv = parse_number(&p);
    indicator(answers.iter().any(|a| {
        let a = normalize_text(a);
        match (pv, parse_number(&a)) {
            (Some(x), Some(0.0)) => x == 0.0,
            (Some(x), Some(v)) => (x - v).abs() / v.abs() <= RELAXED_TOLERANCE,
            _ => a == p,
        }
    }))
}

/// Whether any answer occurs inside the prediction. `math` compares with
/// all whitespace removed.
pub fn substring_match(pred: &str, answers: &[String], math: bool) -> f64 {
    let prep = |s: &str| {
        let n = normalize_text(s);
        if math {
            strip_whitespace(&n)
        } else {
            n
        }
    };
    let p = prep(pred);
    indicator(answers.iter().any(|a| p.contains(&prep(a))))
}

static ISOLATED_UPPER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|[^A-Za-z])([A-Z])(?:[^A-Za-z]|$)").unwrap());

static YES_NO: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:^|[^A-Za-z])(yes|no)(?:[^A-Za-z]|$)").unwrap());

/// First uppercase letter standing alone between non-letters.
pub fn mcq_extract(pred: &str) -> Option<char> {
    ISOLATED_UPPER
        .captures(pred.trim())
        .and_then(|c| c[1].chars().next())
}

/// First standalone "yes" or "no", lowercased.
pub fn yesno_extract(pred: &str) -> Option<&'static str> {
    YES_NO.captures(pred).map(|c| {
        if c[1].eq_ignore_ascii_case("yes") {
            "yes"
        } else {
            "no"
        }
    })
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure over whitespace tokens, maximized over references.
pub fn rouge_l(pred: &str, refs: &[String]) -> f64 {
    // Splitting the lowercased text tokenizes exactly as normalizing first.
    let p = pred.to_lowercase();
    let pt: Vec<&str> = p.split_whitespace().collect();
    refs.iter()
        .map(|r| {
            let r = r.to_lowercase();
            let rt: Vec<&str> = r.split_whitespace().collect();
            let lcs = lcs_len(&pt, &rt) as f64;
            if lcs == 0.0 {
                return 0.0;
            }
            let precision = lcs / pt.len() as f64;
            let recall = lcs / rt.len() as f64;
            2.0 * precision * recall / (precision + recall)
        })
        .fold(0.0, f64::max)
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Gold labels of a multiple-choice record: answers that are labels, plus
/// labels of choices whose text equals an answer.
fn gold_labels(rec: &QuestionRecord) -> Vec<char> {
    let mut labels = Vec::new();
    for a in &rec.answers {
        let t = a.trim();
        let mut chars = t.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            labels.push(c.to_ascii_uppercase());
            continue;
        }
        for choice in rec.choices.iter().flatten() {
            if normalize_text(&choice.text) == normalize_text(t) {
                labels.extend(choice.label.chars().next());
            }
        }
    }
    labels
}

/// Scores one prediction with the record's task metric.
pub fn score_record(rec: &QuestionRecord, pred: &str) -> MetricResult {
    let (metric, score) = match rec.task {
        TaskKind::Exact => ("exact_match", exact_match(pred, &rec.answers)),
        TaskKind::Vqa => ("vqa_score", vqa_score(pred, &rec.answers)),
        TaskKind::Relaxed => ("relaxed_match", relaxed_match(pred, &rec.answers)),
        TaskKind::Substring => ("substring_match", substring_match(pred, &rec.answers, rec.math)),
        TaskKind::Mcq => {
            let hit = mcq_extract(pred).is_some_and(|l| gold_labels(rec).contains(&l));
            ("mcq_accuracy", indicator(hit))
        }
        TaskKind::Yesno => {
            let hit = yesno_extract(pred)
                .is_some_and(|y| rec.answers.iter().any(|a| normalize_text(a) == y));
            ("yesno_accuracy", indicator(hit))
        }
        TaskKind::Caption => ("rouge_l", rouge_l(pred, &rec.answers)),
    };
    MetricResult {
        id: rec.id.clone(),
        score,
        metric_name: metric.to_string(),
        prediction: pred.to_string(),
        error: None,
    }
}

/// Parses the task name and scores; unknown names are an error.
pub fn score_with_task(task: &str, rec: &QuestionRecord, pred: &str) -> Result<MetricResult> {
    let kind: TaskKind = task.parse()?;
    let rec = QuestionRecord {
        task: kind,
        ..rec.clone()
    };
    Ok(score_record(&rec, pred))
}

/// Mean score, counting errored records as zero.
pub fn mean_score(results: &[MetricResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().map(|r| r.score).sum::<f64>() / results.len() as f64
}

/// One row of the aggregate CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub benchmark: String,
    pub method: String,
    pub mean_score: f64,
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("benchmark,method,mean_score\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6}\n", r.benchmark, r.method, r.mean_score));
    }
    out
}
