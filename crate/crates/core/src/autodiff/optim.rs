use serde::{Deserialize, Serialize};

use super::ops::{Grads, Tape, Var};
use super::tensor::{Real, Tensor};
use super::AdError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Pushes every parameter onto `tape`; the result is indexed by `ParamId`.
    pub fn load(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Pushes every parameter as a constant, for inference.
    pub fn load_frozen(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    /// Gradients of the loaded parameters, zero where none flowed.
    pub fn collect_grads(&self, vars: &[Var], grads: &mut Grads<T>) -> Vec<Vec<T>> {
        vars.iter()
            .zip(&self.tensors)
            .map(|(v, t)| grads.take(*v).unwrap_or_else(|| vec![T::zero(); t.len()]))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Replaces values from `other`, which must have the same layout.
    pub fn copy_from(&mut self, other: &ParamStore<T>) -> Result<(), AdError> {
        if self.names != other.names {
            return Err(AdError::ShapeMismatch {
                op: "copy_from",
                lhs: vec![self.len()],
                rhs: vec![other.len()],
            });
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if a.shape != b.shape {
                return Err(AdError::ShapeMismatch {
                    op: "copy_from",
                    lhs: a.shape.clone(),
                    rhs: b.shape.clone(),
                });
            }
            a.data.clone_from(&b.data);
        }
        Ok(())
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(grads: &mut [Vec<T>], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .flatten()
        .map(|g| {
            let v = g.to_f64().unwrap();
            v * v
        })
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::lit(max_norm / norm);
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Fraction of `total_steps` spent in linear warmup.
    pub warmup_frac: f64,
    pub total_steps: usize,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            warmup_frac: 0.1,
            total_steps: 10_000,
            clip: Some(1.0),
        }
    }
}

impl AdamWConfig {
    /// Learning rate for 0-based `step`: linear warmup from 0, then cosine
    /// decay reaching 0 at `total_steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let total = self.total_steps.max(1) as f64;
        let warm = (self.warmup_frac * total).round();
        let s = step as f64;
        if s < warm {
            self.lr * s / warm
        } else {
            let p = ((s - warm) / (total - warm).max(1.0)).min(1.0);
            self.lr * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub step: usize,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(config: AdamWConfig, params: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.tensors.iter().map(|t| vec![T::zero(); t.len()]).collect();
        AdamW {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update. Clips `grads` first when configured; returns the pre-clip
    /// gradient norm.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &mut [Vec<T>]) -> f64 {
        let norm = match self.config.clip {
            Some(c) => clip_grad_norm(grads, c),
            None => clip_grad_norm(grads, f64::INFINITY),
        };
        let c = &self.config;
        let lr = c.lr_at(self.step);
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one, eps) = (T::one(), T::lit(c.eps));
        let step_size = T::lit(lr / bc1);
        let rbc2 = T::lit(1.0 / bc2);
        let decay = T::lit(1.0 - lr * c.weight_decay);
        for (((p, g), m), v) in params.tensors.iter_mut().zip(grads.iter()).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.data.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let denom = (v[i] * rbc2).sqrt() + eps;
                p.data[i] = p.data[i] * decay - step_size * m[i] / denom;
            }
        }
        norm
    }
}
