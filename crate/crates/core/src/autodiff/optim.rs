use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Tape, Tensor, Var};
use crate::error::{dims_mismatch, Error, Result};
use crate::scalar::Scalar;

/// Ordered, named parameter tensors of a model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        self.entries.push((name.into(), value));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, i: usize) -> &Tensor<T> {
        &self.entries[i].1
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.entries[i].1
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Records every parameter as a leaf; the returned handles follow the
    /// parameter order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| tape.leaf(t.clone())).collect()
    }

    /// Sets every value to zero, keeping names and shapes.
    pub fn zeroed(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// Checks names and shapes against `other` (e.g. a freshly built model).
    pub fn check_layout(&self, other: &Params<T>) -> Result<()> {
        if self.len() != other.len() {
            return Err(dims_mismatch(other.len(), self.len()));
        }
        for ((n1, t1), (n2, t2)) in self.entries.iter().zip(&other.entries) {
            if n1 != n2 || t1.shape() != t2.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{n1}` {:?} does not match `{n2}` {:?}",
                    t1.shape(),
                    t2.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }
}

/// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, where `fan_in`
/// is the product of all but the leading dimension.
pub fn fan_in_uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let fan_in: usize = shape.iter().skip(1).product::<usize>().max(1);
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = T::c(rng.random_range(-bound..bound));
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient; `weight_decay * w` is added to each gradient.
    pub weight_decay: f64,
    /// Factor applied to the learning rate by [`Adam::decay`].
    pub lr_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-8,
            lr_decay: 0.9,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.lr_decay > 0.0
            && self.lr_decay <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Adam moments and schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    lr: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

pub type OptimizerState<T> = Adam<T>;

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &Params<T>) -> Self {
        let zeros = |p: &Params<T>| p.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        Self {
            config,
            lr: config.lr,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Multiplies the learning rate by the configured decay factor.
    pub fn decay(&mut self) {
        self.lr *= self.config.lr_decay;
    }

    pub fn step(&mut self, params: &mut Params<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(dims_mismatch(params.len(), grads.len()));
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::c(c.beta1), T::c(c.beta2));
        let (one_b1, one_b2) = (T::c(1.0 - c.beta1), T::c(1.0 - c.beta2));
        let bc1 = T::c(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::c(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps, wd) = (T::c(self.lr), T::c(c.eps), T::c(c.weight_decay));
        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(i);
            if p.shape() != g.shape() {
                return Err(dims_mismatch(p.shape(), g.shape()));
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, &gr), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                let gr = gr + wd * *w;
                *mi = b1 * *mi + one_b1 * gr;
                *vi = b2 * *vi + one_b2 * gr * gr;
                let mh = *mi / bc1;
                let vh = *vi / bc2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
