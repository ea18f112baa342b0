//! Independent reimplementation of the step rules and the greedy walk.

use std::collections::HashMap;

use vlm_tts::generator::Generator;
use vlm_tts::types::{Aggregation, AugmentedInput, TokenId};

use super::{all_prefixes, ORACLE_DEPTH, ORACLE_VOCAB};

pub const RULES: [Aggregation; 4] = [
    Aggregation::Average,
    Aggregation::EntropyWeighted,
    Aggregation::Majority,
    Aggregation::MostConfident,
];

pub fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Next token and, for continuous rules, the aggregate.
pub fn step(rows: &[Vec<f64>], rule: Aggregation) -> (TokenId, Option<Vec<f64>>) {
    let n = rows.len() as f64;
    let v = rows[0].len();
    match rule {
        Aggregation::Average => {
            let agg: Vec<f64> = (0..v).map(|t| rows.iter().map(|r| r[t]).sum::<f64>() / n).collect();
            (first_max(&agg) as TokenId, Some(agg))
        }
        Aggregation::EntropyWeighted => {
            let h: Vec<f64> = rows
                .iter()
                .map(|r| -r.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>())
                .collect();
            let z: f64 = h.iter().map(|x| (-x).exp()).sum();
            let w: Vec<f64> = h.iter().map(|x| (-x).exp() / z).collect();
            let agg: Vec<f64> = (0..v).map(|t| rows.iter().zip(&w).map(|(r, wi)| wi * r[t]).sum()).collect();
            (first_max(&agg) as TokenId, Some(agg))
        }
        Aggregation::Majority => {
            let mut votes = vec![0.0; v];
            for r in rows {
                votes[first_max(r)] += 1.0;
            }
            (first_max(&votes) as TokenId, None)
        }
        Aggregation::MostConfident => {
            let mut best = (0usize, f64::NEG_INFINITY);
            for t in 0..v {
                for r in rows {
                    if r[t] > best.1 {
                        best = (t, r[t]);
                    }
                }
            }
            (best.0 as TokenId, None)
        }
    }
}

/// Tabulates the rule's choice at every prefix shorter than the oracle
/// depth, then walks the table from the empty prefix.
pub fn path(g: &dyn Generator, inputs: &[AugmentedInput], rule: Aggregation) -> Vec<TokenId> {
    let table: HashMap<Vec<TokenId>, TokenId> = all_prefixes(ORACLE_VOCAB, ORACLE_DEPTH - 1)
        .into_iter()
        .map(|p| {
            let rows: Vec<Vec<f64>> = inputs.iter().map(|x| g.step(x, &p).unwrap().into_inner()).collect();
            let next = step(&rows, rule).0;
            (p, next)
        })
        .collect();
    let mut out = Vec::new();
    while out.len() < ORACLE_DEPTH {
        let t = table[&out];
        out.push(t);
        if t == 0 {
            break;
        }
    }
    out
}
