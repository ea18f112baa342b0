//! AdamW with decoupled weight decay, plus the learning-rate schedule and
//! gradient clipping used by both adaptation variants.

use std::collections::HashMap;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWParams {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// First and second moment estimates for each parameter tensor, keyed by
/// the tensor's stable key.
#[derive(Debug, Clone, Default)]
pub struct AdamW {
    pub params: Option<AdamWParams>,
    moments: HashMap<u64, (Vec<f64>, Vec<f64>)>,
    steps: u64,
}

impl AdamW {
    pub fn new(params: AdamWParams) -> Self {
        Self {
            params: Some(params),
            moments: HashMap::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Marks the start of an optimizer step; bias correction uses the count.
    pub fn begin_step(&mut self) {
        self.steps += 1;
    }

    /// Updates one tensor in place at learning rate `lr`.
    pub fn update(&mut self, key: u64, values: &mut [f64], grads: &[f64], lr: f64) {
        let p = self.params.expect("AdamW constructed without parameters");
        let t = self.steps.max(1) as i32;
        let (m, v) = self
            .moments
            .entry(key)
            .or_insert_with(|| (vec![0.0; values.len()], vec![0.0; values.len()]));
        let bias1 = 1.0 - p.beta1.powi(t);
        let bias2 = 1.0 - p.beta2.powi(t);
        let step_size = lr / bias1;
        for i in 0..values.len() {
            values[i] *= 1.0 - lr * p.weight_decay;
            m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * grads[i];
            v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * grads[i] * grads[i];
            let denom = (v[i] / bias2).sqrt() + p.eps;
            values[i] -= step_size * m[i] / denom;
        }
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        grads.iter_mut().for_each(|g| g.iter_mut().for_each(|x| *x *= scale));
    }
    norm
}

/// Linear warmup followed by half-cosine decay to zero, as a multiplier
/// on the base learning rate for optimizer step `step` (0-based).
pub fn cosine_with_warmup(step: usize, warmup: usize, total: usize) -> f64 {
    if step < warmup {
        return step as f64 / warmup.max(1) as f64;
    }
    let span = total.saturating_sub(warmup).max(1);
    let progress = (step - warmup) as f64 / span as f64;
    (0.5 * (1.0 + (PI * progress).cos())).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = AdamW::new(AdamWParams::new(0.01, 0.0));
        let mut w = vec![0.0, 0.0];
        opt.begin_step();
        opt.update(1, &mut w, &[3.0, -0.2], 0.01);
        assert!((w[0] + 0.01).abs() < 1e-9);
        assert!((w[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn decoupled_decay_shrinks_without_gradient() {
        let mut opt = AdamW::new(AdamWParams::new(0.1, 0.5));
        let mut w = vec![2.0];
        opt.begin_step();
        opt.update(0, &mut w, &[0.0], 0.1);
        assert!((w[0] - 2.0 * 0.95).abs() < 1e-12);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut a = vec![3.0];
        let mut b = vec![4.0];
        let norm = clip_grad_norm(&mut [&mut a, &mut b], 1.0);
        assert_eq!(norm, 5.0);
        let clipped = (a[0] * a[0] + b[0] * b[0]).sqrt();
        assert!((clipped - 1.0).abs() < 1e-6);

        let mut c = vec![0.3];
        clip_grad_norm(&mut [&mut c], 1.0);
        assert_eq!(c[0], 0.3);
    }

    #[test]
    fn schedule_shape() {
        assert_eq!(cosine_with_warmup(0, 5, 6), 0.0);
        assert!((cosine_with_warmup(2, 5, 6) - 0.4).abs() < 1e-12);
        assert_eq!(cosine_with_warmup(5, 5, 6), 1.0);
        assert!(cosine_with_warmup(8, 2, 10) < cosine_with_warmup(4, 2, 10));
        assert!(cosine_with_warmup(10, 2, 10).abs() < 1e-12);
    }
}
