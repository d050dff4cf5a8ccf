use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Self::default() }
    }
}

/// A named trainable tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
    #[serde(skip)]
    pub grad: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    params: Vec<Parameter>,
    step: u64,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor and returns its handle.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> usize {
        let n = value.len();
        self.params.push(Parameter {
            name: name.into(),
            value,
            trainable,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        self.params.len() - 1
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.params[idx].value
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.params[idx].value
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.clear();
            p.grad.resize(p.value.len(), 0.0);
        }
    }

    pub fn accumulate(&mut self, idx: usize, grad: &Tensor) -> Result<()> {
        let p = &mut self.params[idx];
        if grad.len() != p.value.len() {
            return Err(Error::shape("accumulate gradient", p.value.len(), grad.len()));
        }
        if p.grad.len() != p.value.len() {
            p.grad.resize(p.value.len(), 0.0);
        }
        for (g, d) in p.grad.iter_mut().zip(grad.data()) {
            *g += d;
        }
        Ok(())
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| {
                let mut g = p.grad.clone();
                g.resize(p.value.len(), 0.0);
                g
            })
            .collect()
    }

    pub fn set_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.scalar_count() {
            return Err(Error::shape("set_flat_values", self.scalar_count(), flat.len()));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn grads_finite(&self) -> bool {
        self.params.iter().all(|p| p.grad.iter().all(|g| g.is_finite()))
    }

    /// One bias-corrected Adam update of every trainable parameter.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        if !(cfg.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", cfg.lr)));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            for (((w, g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(&p.grad)
                .zip(p.m.iter_mut())
                .zip(p.v.iter_mut())
            {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParameterSet {
        let mut ps = ParameterSet::new();
        ps.add("theta", Tensor::filled(vec![1], value), true);
        ps
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut ps = ParameterSet::new();
        ps.add("w", Tensor::new(vec![3], vec![1.0, 1.0, 1.0]).unwrap(), true);
        ps.accumulate(0, &Tensor::new(vec![3], vec![0.5, -20.0, 1e-3]).unwrap()).unwrap();
        ps.adam_step(&AdamConfig::with_lr(0.01)).unwrap();
        let w = ps.get(0).data();
        assert!((w[0] - 0.99).abs() < 1e-6);
        assert!((w[1] - 1.01).abs() < 1e-6);
        assert!((w[2] - 0.99).abs() < 1e-5);
        assert_eq!(ps.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = single(2.5);
        ps.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(ps.get(0).data(), &[2.5]);
    }

    #[test]
    fn frozen_params_are_skipped() {
        let mut ps = ParameterSet::new();
        ps.add("frozen", Tensor::filled(vec![1], 1.0), false);
        ps.accumulate(0, &Tensor::filled(vec![1], 1.0)).unwrap();
        ps.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(ps.get(0).data(), &[1.0]);
    }

    #[test]
    fn rejects_non_positive_lr() {
        assert!(single(1.0).adam_step(&AdamConfig::with_lr(0.0)).is_err());
        assert!(single(1.0).adam_step(&AdamConfig::with_lr(-1.0)).is_err());
    }

    #[test]
    fn minimizes_quadratic() {
        let mut ps = single(1.0);
        let cfg = AdamConfig::with_lr(0.1);
        for _ in 0..200 {
            ps.zero_grad();
            let theta = ps.get(0).data()[0];
            ps.accumulate(0, &Tensor::filled(vec![1], 2.0 * theta)).unwrap();
            ps.adam_step(&cfg).unwrap();
        }
        assert!(ps.get(0).data()[0].abs() < 1e-3, "{}", ps.get(0).data()[0]);
    }
}
