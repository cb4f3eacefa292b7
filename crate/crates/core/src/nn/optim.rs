use alloc::vec::Vec;

use super::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.005, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || (0..params.len()).map(|i| alloc::vec![0.0; params.value(i).len()]).collect();
        Self { cfg, step: 0, m: zeros(), v: zeros() }
    }

    /// Applies one update from the accumulated gradients.
    pub fn step(&mut self, params: &mut ParamStore) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        for i in 0..params.len() {
            let grad: Vec<f64> = if c.weight_decay != 0.0 {
                params.grad(i).data().iter().zip(params.value(i).data()).map(|(g, w)| g + c.weight_decay * w).collect()
            } else {
                params.grad(i).data().to_vec()
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for ((w, g), (mi, vi)) in params.value_mut(i).data_mut().iter_mut().zip(&grad).zip(m.iter_mut().zip(v.iter_mut())) {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * g;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * g * g;
                *w -= c.learning_rate * (*mi / bc1) / (libm::sqrt(*vi / bc2) + c.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use alloc::vec;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = ParamStore::new();
        p.push("w", Tensor::vector(vec![1.0, -2.0, 3.0]));
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        for _ in 0..5 {
            adam.step(&mut p);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = ParamStore::new();
        p.push("w", Tensor::vector(vec![1.0, 1.0]));
        p.grad_mut(0).data_mut().copy_from_slice(&[2.0, -0.5]);
        let mut adam = Adam::new(AdamConfig { learning_rate: 0.1, ..Default::default() }, &p);
        adam.step(&mut p);
        let w = p.value(0).data();
        assert!((w[0] - 0.9).abs() < 1e-6 && (w[1] - 1.1).abs() < 1e-6);
    }
}
