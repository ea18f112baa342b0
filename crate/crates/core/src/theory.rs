//! Closed-form correctness models and their Monte Carlo counterparts.
//!
//! Selection with correlated quality and score: picking the highest-scoring of
//! `N` candidates raises expected quality by `ρ σ_Q k_N`, where `k_N` is the
//! expected maximum of `N` standard normals. Chained selection: picking the
//! best token at each of `T` steps versus picking the best of `N` complete
//! answers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::types::derive_seed;

const QUAD_LO: f64 = -10.0;
const QUAD_HI: f64 = 10.0;
const QUAD_TOL: f64 = 1e-8;

/// Relative margin for the strict comparison in [`theorem_check`], so that
/// mathematically equal chains do not cross through rounding.
const CROSSOVER_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionModel {
    pub mu_q: f64,
    pub mu_s: f64,
    pub sigma_q: f64,
    pub sigma_s: f64,
    pub rho: f64,
    pub n: usize,
}

impl SelectionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_q > 0.0 && self.sigma_s > 0.0) {
            return Err(Error::invalid("sigma_q and sigma_s must be positive"));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid("rho must lie in [-1, 1]"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Per-step base correctness `p_t`.
    pub p: Vec<f64>,
    /// Per-step selector accuracy `s_t`.
    pub s_token: Vec<f64>,
    pub s_answer: f64,
    pub n: usize,
    pub delta: f64,
}

impl ChainParams {
    /// Constant `p` and `s_token` over `t` steps.
    pub fn uniform(p: f64, s_token: f64, s_answer: f64, n: usize, t: usize) -> Self {
        Self {
            p: vec![p; t],
            s_token: vec![s_token; t],
            s_answer,
            n,
            delta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.is_empty() || self.p.len() != self.s_token.len() {
            return Err(Error::invalid("p and s_token must be non-empty and of equal length"));
        }
        if self.p.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::invalid("every p_t must lie in (0, 1)"));
        }
        let in_unit = |s: f64| s > 0.0 && s <= 1.0;
        if !self.s_token.iter().all(|&s| in_unit(s)) || !in_unit(self.s_answer) {
            return Err(Error::invalid("selector accuracies must lie in (0, 1]"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.p.len()
    }
}

/// `1 - (1 - x)^n`, accurate for small `x`.
fn at_least_one(x: f64, n: usize) -> f64 {
    -((n as f64) * (-x).ln_1p()).exp_m1()
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: (f64, f64, f64),
    tol: f64,
    depth: u32,
) -> f64 {
    let (m, fm, s) = whole;
    let left = simpson(f, a, fa, m, fm);
    let right = simpson(f, m, fm, b, fb);
    let delta = left.2 + right.2 - s;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left.2 + right.2 + delta / 15.0;
    }
    adaptive_simpson(f, a, fa, m, fm, left, tol / 2.0, depth - 1)
        + adaptive_simpson(f, m, fm, b, fb, right, tol / 2.0, depth - 1)
}

/// `∫ f` over `[a, b]` by adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // Start from a uniform grid so narrow peaks are not missed by the first estimate.
    const PANELS: usize = 64;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = if i + 1 == PANELS { b } else { lo + h };
            let (flo, fhi) = (f(lo), f(hi));
            let whole = simpson(&f, lo, flo, hi, fhi);
            adaptive_simpson(&f, lo, flo, hi, fhi, whole, tol / PANELS as f64, 48)
        })
        .sum()
}

/// Expected maximum of `n` independent standard normals.
pub fn k_n(n: usize) -> f64 {
    assert!(n >= 1, "k_n needs n >= 1");
    if n == 1 {
        return 0.0;
    }
    let normal = Normal::standard();
    let nf = n as f64;
    integrate(
        |z| nf * z * normal.pdf(z) * normal.cdf(z).powi(n as i32 - 1),
        QUAD_LO,
        QUAD_HI,
        QUAD_TOL,
    )
}

/// `μ_Q + ρ σ_Q k_N`.
pub fn expected_selected_quality(model: &SelectionModel) -> Result<f64> {
    model.validate()?;
    if model.rho == 0.0 {
        return Ok(model.mu_q);
    }
    Ok(model.mu_q + model.rho * model.sigma_q * k_n(model.n))
}

/// Probability that every step of token-level selection is correct:
/// `Π_t s_t (1 - (1 - p_t)^N)`.
pub fn p_token(cp: &ChainParams) -> Result<f64> {
    cp.validate()?;
    Ok(cp
        .p
        .iter()
        .zip(&cp.s_token)
        .map(|(&p, &s)| s * at_least_one(p, cp.n))
        .product())
}

/// Probability that answer-level selection returns a correct answer:
/// `s (1 - (1 - Π_t p_t)^N)`.
pub fn p_answer(cp: &ChainParams) -> Result<f64> {
    cp.validate()?;
    let chain: f64 = cp.p.iter().product();
    Ok(cp.s_answer * at_least_one(chain, cp.n))
}

/// Smallest per-step selector accuracy that lifts step correctness to
/// `(1 + δ) p`: `(1 + δ) p / (1 - (1 - p)^N)`.
pub fn feasible_selector_accuracy(p: f64, n: usize, delta: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || n == 0 || delta < 0.0 {
        return Err(Error::invalid("need p in (0, 1), n >= 1 and delta >= 0"));
    }
    let bound = (1.0 + delta) * p / at_least_one(p, n);
    if bound > 1.0 {
        return Err(Error::Infeasible { bound });
    }
    Ok(bound)
}

/// Both chain probabilities at one length `T`, with step correctness
/// `q = (1 + δ) p` on the token side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainPoint {
    pub t: usize,
    pub p_token: f64,
    pub p_answer: f64,
}

pub fn chain_point(p: f64, delta: f64, n: usize, s_answer: f64, t: usize) -> Result<ChainPoint> {
    let q = (1.0 + delta) * p;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Infeasible { bound: q });
    }
    let s = feasible_selector_accuracy(p, n, delta)?;
    let mut cp = ChainParams::uniform(p, s, s_answer, n, t);
    cp.delta = delta;
    Ok(ChainPoint {
        t,
        p_token: p_token(&cp)?,
        p_answer: p_answer(&cp)?,
    })
}

/// First chain length `T ≤ t_max` at which token-level selection beats
/// answer-level selection.
pub fn theorem_check(p: f64, delta: f64, n: usize, s_answer: f64, t_max: usize) -> Result<usize> {
    for t in 1..=t_max {
        let pt = chain_point(p, delta, n, s_answer, t)?;
        if pt.p_token > pt.p_answer * (1.0 + CROSSOVER_MARGIN) {
            return Ok(t);
        }
    }
    Err(Error::NotFound { t_max })
}

/// CSV with columns `n,k_n`.
pub fn k_n_csv(ns: &[usize]) -> String {
    let mut out = String::from("n,k_n\n");
    for &n in ns {
        out.push_str(&format!("{n},{:.10}\n", k_n(n)));
    }
    out
}

/// CSV with columns `T,p_token,p_answer` for `T = 1..=t_max`.
pub fn chain_csv(p: f64, delta: f64, n: usize, s_answer: f64, t_max: usize) -> Result<String> {
    let mut out = String::from("T,p_token,p_answer\n");
    for t in 1..=t_max {
        let pt = chain_point(p, delta, n, s_answer, t)?;
        out.push_str(&format!("{},{:.10e},{:.10e}\n", pt.t, pt.p_token, pt.p_answer));
    }
    Ok(out)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl Estimate {
    /// Distance from `value` in units of standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.mean - value).abs() / self.std_error.max(f64::MIN_POSITIVE)
    }
}

// Fixed shard count so results do not depend on the thread pool size.
const SHARDS: u64 = 16;

/// Runs `trials` draws of `sample` split over seeded shards. Each draw
/// returns a value; the mean and its standard error are reported.
fn monte_carlo<F>(trials: u64, seed: u64, label: &str, sample: F) -> Estimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let sums: Vec<(f64, f64)> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let count = trials / SHARDS + u64::from(shard < trials % SHARDS);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("{label}/{shard}")));
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..count {
                let x = sample(&mut rng);
                sum += x;
                sq += x * x;
            }
            (sum, sq)
        })
        .collect();
    let (sum, sq) = sums
        .iter()
        .fold((0.0, 0.0), |(a, b), (s, q)| (a + s, b + q));
    let n = trials as f64;
    let mean = sum / n;
    let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Estimate {
        mean,
        std_error: (var / n).sqrt(),
        trials,
    }
}

/// Sample mean of the maximum of `n` standard normals.
pub fn mc_k_n(n: usize, trials: u64, seed: u64) -> Estimate {
    monte_carlo(trials, seed, &format!("k_n/{n}"), |rng| {
        (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Quality of the highest-scoring of `n` correlated (quality, score) pairs.
pub fn mc_selected_quality(model: &SelectionModel, trials: u64, seed: u64) -> Result<Estimate> {
    model.validate()?;
    let m = *model;
    let ortho = (1.0 - m.rho * m.rho).max(0.0).sqrt();
    Ok(monte_carlo(trials, seed, "selected_quality", move |rng| {
        let mut best_s = f64::NEG_INFINITY;
        let mut best_q = 0.0;
        for _ in 0..m.n {
            let zs: f64 = rng.sample(StandardNormal);
            let zo: f64 = rng.sample(StandardNormal);
            let s = m.mu_s + m.sigma_s * zs;
            let q = m.mu_q + m.sigma_q * (m.rho * zs + ortho * zo);
            if s > best_s {
                best_s = s;
                best_q = q;
            }
        }
        best_q
    }))
}

/// Chain simulation estimates of token-level and answer-level correctness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainEstimate {
    pub token: Estimate,
    pub answer: Estimate,
}

/// Simulates both selection chains trial by trial. Token level: at each step
/// `n` candidates are correct independently with `p_t`, and the selector picks
/// a correct one with probability `s_t` when any exists. Answer level: `n`
/// full chains are sampled step by step, and the selector picks a fully
/// correct chain with probability `s` when any exists.
pub fn simulate_chain(cp: &ChainParams, trials: u64, seed: u64) -> Result<ChainEstimate> {
    cp.validate()?;
    let token = monte_carlo(trials, seed, "chain/token", |rng| {
        let ok = cp.p.iter().zip(&cp.s_token).all(|(&p, &s)| {
            let any = (0..cp.n).fold(false, |acc, _| rng.random::<f64>() < p || acc);
            any && rng.random::<f64>() < s
        });
        f64::from(u8::from(ok))
    });
    let answer = monte_carlo(trials, seed, "chain/answer", |rng| {
        // Every step draws even after a failure, so the stream length is fixed.
        #[allow(clippy::unnecessary_fold)]
        let any = (0..cp.n).fold(false, |acc, _| {
            let chain_ok = cp.p.iter().fold(true, |ok, &p| (rng.random::<f64>() < p) && ok);
            chain_ok || acc
        });
        f64::from(u8::from(any && rng.random::<f64>() < cp.s_answer))
    });
    Ok(ChainEstimate { token, answer })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_n_small_values() {
        assert_eq!(k_n(1), 0.0);
        assert!((k_n(2) - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-6);
        // E[max of 3] = 3 / (2 √π).
        assert!((k_n(3) - 1.5 / std::f64::consts::PI.sqrt()).abs() < 1e-6);
        let ks: Vec<f64> = (1..=20).map(k_n).collect();
        assert!(ks.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn selection_formula() {
        let mut m = SelectionModel { mu_q: 1.5, mu_s: 0.0, sigma_q: 2.0, sigma_s: 1.0, rho: 0.0, n: 8 };
        assert_eq!(expected_selected_quality(&m).unwrap(), 1.5);
        m = SelectionModel { mu_q: 0.0, sigma_q: 1.0, rho: 1.0, n: 2, ..m };
        assert!((expected_selected_quality(&m).unwrap() - 0.564_190).abs() < 1e-6);
    }

    #[test]
    fn chain_formulas() {
        let one = ChainParams::uniform(0.8, 1.0, 1.0, 1, 1);
        assert!((p_token(&one).unwrap() - 0.8).abs() < 1e-15);
        let two = ChainParams::uniform(0.9, 1.0, 1.0, 2, 2);
        assert!((p_token(&two).unwrap() - 0.9801).abs() < 1e-12);
        assert!((p_answer(&two).unwrap() - 0.9639).abs() < 1e-12);
        let s = ChainParams::uniform(0.7, 1.0, 0.6, 1, 1);
        assert!((p_answer(&s).unwrap() - 0.42).abs() < 1e-12);
    }

    #[test]
    fn feasibility_bound() {
        assert!((feasible_selector_accuracy(0.9, 2, 0.0).unwrap() - 0.9 / 0.99).abs() < 1e-12);
        assert!((feasible_selector_accuracy(0.5, 2, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(feasible_selector_accuracy(0.99, 2, 0.2), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn crossover_search() {
        let t = theorem_check(0.8, 0.125, 4, 1.0, 30).unwrap();
        assert!(t <= 30);
        let at = chain_point(0.8, 0.125, 4, 1.0, t).unwrap();
        assert!(at.p_token > at.p_answer);
        if t > 1 {
            let before = chain_point(0.8, 0.125, 4, 1.0, t - 1).unwrap();
            assert!(before.p_token <= before.p_answer);
        }
        let end = chain_point(0.8, 0.125, 4, 1.0, 30).unwrap();
        assert!((end.p_token - 0.9f64.powi(30)).abs() < 1e-12);
        assert!(matches!(theorem_check(0.6, 0.0, 1, 1.0, 50), Err(Error::NotFound { t_max: 50 })));
    }

    #[test]
    fn csv_headers() {
        assert!(k_n_csv(&[1, 2]).starts_with("n,k_n\n1,0.0000000000\n"));
        let csv = chain_csv(0.8, 0.125, 4, 1.0, 3).unwrap();
        assert_eq!(csv.lines().count(), 4);
    }
}
