//! Named parameter tensors with per-parameter Adam state.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Serialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: Array2<f64>,
    first_moment: Array2<f64>,
    second_moment: Array2<f64>,
    step: u64,
}

/// Ordered collection of named parameter tensors with their optimizer state.
///
/// Iteration order is the lexicographic name order, which keeps every
/// traversal of the set deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Entry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor with fresh (zero) Adam state.
    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        let dim = value.raw_dim();
        self.entries.insert(
            name.into(),
            Entry {
                value,
                first_moment: Array2::zeros(dim.clone()),
                second_moment: Array2::zeros(dim),
                step: 0,
            },
        );
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        &self
            .entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
            .value
    }

    pub fn set(&mut self, name: &str, value: Array2<f64>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter {name:?}")))?;
        if entry.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "param_set",
                left: entry.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        entry.value = value;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    /// One Adam update with bias correction. Every gradient must name a
    /// registered parameter of matching shape; parameters without an entry in
    /// `grads` are left untouched (their step count does not advance).
    pub fn adam_step(
        &mut self,
        grads: &BTreeMap<String, Array2<f64>>,
        cfg: &AdamConfig,
    ) -> Result<()> {
        for (name, grad) in grads {
            let entry = self
                .entries
                .get_mut(name)
                .ok_or_else(|| Error::Invalid(format!("gradient for unknown parameter {name:?}")))?;
            if entry.value.shape() != grad.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: entry.value.shape().to_vec(),
                    right: grad.shape().to_vec(),
                });
            }
            entry.step += 1;
            let t = entry.step as i32;
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            ndarray::Zip::from(&mut entry.value)
                .and(&mut entry.first_moment)
                .and(&mut entry.second_moment)
                .and(grad)
                .for_each(|value, m, v, &g| {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *value -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
                });
        }
        Ok(())
    }
}
