//! Named parameter storage with paired gradients and Adam moment buffers.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::rng::Rng;

/// Optimizer hyperparameters shared by every network in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub soft_update_tau: f64,
}

impl OptimizerConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        OptimizerConfig {
            learning_rate,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_epsilon: 1e-5,
            soft_update_tau: 0.01,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.learning_rate <= 0.0 {
            return Err(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.adam_epsilon <= 0.0 {
            return Err(format!("adam_epsilon must be > 0, got {}", self.adam_epsilon));
        }
        if !(self.soft_update_tau > 0.0 && self.soft_update_tau <= 1.0) {
            return Err(format!("tau must be in (0, 1], got {}", self.soft_update_tau));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    pub grad: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
}

/// A named collection of parameter tensors, each paired with gradient
/// storage and Adam moments. Iteration order is alphabetical (BTreeMap),
/// which keeps updates and checkpoints deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    entries: BTreeMap<String, ParamEntry>,
    step: u64,
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParameterSet {
    pub fn new() -> Self {
        ParameterSet {
            entries: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor) {
        assert!(
            !self.entries.contains_key(name),
            "duplicate parameter {name}"
        );
        let shape = value.shape().to_vec();
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                value,
                grad: Tensor::zeros(&shape),
                adam_m: Tensor::zeros(&shape),
                adam_v: Tensor::zeros(&shape),
            },
        );
    }

    /// Adds a tensor initialized uniformly in ±1/sqrt(fan_in). Matrices are
    /// filled row by row from `rng`.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut Rng) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.range_f64(-bound, bound)).collect();
        self.add(name, Tensor::from_vec(shape, data));
    }

    pub fn value(&self, name: &str) -> &Tensor {
        &self.entry(name).value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self.entry_mut(name).value
    }

    pub fn grad(&self, name: &str) -> &Tensor {
        &self.entry(name).grad
    }

    pub fn grad_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self.entry_mut(name).grad
    }

    fn entry(&self, name: &str) -> &ParamEntry {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    fn entry_mut(&mut self, name: &str) -> &mut ParamEntry {
        self.entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn adam_step_count(&self) -> u64 {
        self.step
    }

    /// Raw access for checkpoint restore.
    pub fn restore_entry(&mut self, name: &str, value: Tensor, m: Tensor, v: Tensor) {
        let e = self.entry_mut(name);
        assert_eq!(e.value.shape(), value.shape(), "restore shape mismatch for {name}");
        e.value = value;
        e.adam_m = m;
        e.adam_v = v;
    }

    pub fn set_adam_step_count(&mut self, step: u64) {
        self.step = step;
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(0.0);
        }
    }

    pub fn grads_all_finite(&self) -> bool {
        self.entries.values().all(|e| e.grad.all_finite())
    }

    /// One Adam update with bias correction over every entry, then zeroes
    /// the gradients.
    pub fn adam_step(&mut self, cfg: &OptimizerConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.adam_beta1.powi(t);
        let bc2 = 1.0 - cfg.adam_beta2.powi(t);
        for e in self.entries.values_mut() {
            let g = e.grad.data();
            let m = e.adam_m.data_mut();
            for (mi, &gi) in m.iter_mut().zip(g) {
                *mi = cfg.adam_beta1 * *mi + (1.0 - cfg.adam_beta1) * gi;
            }
            let v = e.adam_v.data_mut();
            for (vi, &gi) in v.iter_mut().zip(g) {
                *vi = cfg.adam_beta2 * *vi + (1.0 - cfg.adam_beta2) * gi * gi;
            }
            let (m, v) = (e.adam_m.data(), e.adam_v.data());
            let p = e.value.data_mut();
            for i in 0..p.len() {
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
            }
            e.grad.fill(0.0);
        }
    }

    /// target <- (1 - tau) * target + tau * online, entry by entry.
    /// Moments and step counters are left alone.
    pub fn soft_update_from(&mut self, online: &ParameterSet, tau: f64) {
        for (name, e) in self.entries.iter_mut() {
            let src = online.value(name);
            assert_eq!(
                e.value.shape(),
                src.shape(),
                "soft_update shape mismatch for {name}"
            );
            for (t, &o) in e.value.data_mut().iter_mut().zip(src.data()) {
                *t = (1.0 - tau) * *t + tau * o;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_scalar_set(w: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.add("w", Tensor::scalar(w));
        p
    }

    #[test]
    fn adam_zero_grads_fresh_moments_is_noop() {
        let mut p = single_scalar_set(1.5);
        p.adam_step(&OptimizerConfig::with_lr(0.1));
        assert_eq!(p.value("w").item(), 1.5);
    }

    #[test]
    fn adam_descends_quadratic() {
        // f(w) = w^2 from w = 1, lr = 0.1: w must decrease.
        let mut p = single_scalar_set(1.0);
        let cfg = OptimizerConfig::with_lr(0.1);
        let w0 = p.value("w").item();
        p.grad_mut("w").data_mut()[0] = 2.0 * w0;
        p.adam_step(&cfg);
        assert!(p.value("w").item() < w0);
    }

    #[test]
    fn adam_matches_hand_traced_recurrence() {
        // Oracle: the Adam recurrence replayed by hand on a scalar, three
        // steps of f(w) = w^2, lr 0.1, beta1 0.9, beta2 0.99, eps 1e-5.
        let cfg = OptimizerConfig::with_lr(0.1);
        let mut p = single_scalar_set(1.0);

        let (b1, b2, eps, lr) = (0.9, 0.99, 1e-5, 0.1);
        let (mut m, mut v, mut w_ref) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=3 {
            let g = 2.0 * w_ref;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1f64_pow(b1, t));
            let v_hat = v / (1.0 - b1f64_pow(b2, t));
            w_ref -= lr * m_hat / (v_hat.sqrt() + eps);

            let w_cur = p.value("w").item();
            p.grad_mut("w").data_mut()[0] = 2.0 * w_cur;
            p.adam_step(&cfg);
            assert!(
                (p.value("w").item() - w_ref).abs() < 1e-15,
                "step {t}: {} vs {}",
                p.value("w").item(),
                w_ref
            );
        }

        fn b1f64_pow(b: f64, t: usize) -> f64 {
            b.powi(t as i32)
        }
    }

    #[test]
    fn adam_zeroes_grads_afterwards() {
        let mut p = single_scalar_set(1.0);
        p.grad_mut("w").data_mut()[0] = 3.0;
        p.adam_step(&OptimizerConfig::with_lr(0.1));
        assert_eq!(p.grad("w").item(), 0.0);
    }

    #[test]
    fn soft_update_endpoints_and_small_tau() {
        let online = single_scalar_set(1.0);

        let mut t1 = single_scalar_set(0.0);
        t1.soft_update_from(&online, 1.0);
        assert_eq!(t1.value("w").item(), 1.0);

        let mut t0 = single_scalar_set(0.25);
        t0.soft_update_from(&online, 0.0);
        assert_eq!(t0.value("w").item(), 0.25);

        let mut t = single_scalar_set(0.0);
        t.soft_update_from(&online, 0.01);
        assert!((t.value("w").item() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn soft_update_stays_within_endpoints() {
        let mut rng = Rng::from_seed(9);
        let mut online = ParameterSet::new();
        let mut target = ParameterSet::new();
        online.add_uniform("w", &[4, 3], 3, &mut rng);
        target.add_uniform("w", &[4, 3], 3, &mut rng);
        let before = target.value("w").clone();
        target.soft_update_from(&online, 0.3);
        for i in 0..before.len() {
            let (lo, hi) = {
                let a = before.data()[i];
                let b = online.value("w").data()[i];
                (a.min(b), a.max(b))
            };
            let x = target.value("w").data()[i];
            assert!(x >= lo - 1e-15 && x <= hi + 1e-15);
        }
    }

    #[test]
    fn uniform_init_within_bound() {
        let mut rng = Rng::from_seed(1);
        let mut p = ParameterSet::new();
        p.add_uniform("w", &[8, 16], 16, &mut rng);
        let bound = 1.0 / 4.0;
        assert!(p.value("w").data().iter().all(|&x| x.abs() <= bound));
        // Not all identical.
        let first = p.value("w").data()[0];
        assert!(p.value("w").data().iter().any(|&x| x != first));
    }
}
