use rand::Rng;

use super::graph::{Graph, Gradients, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64) -> Self {
        AdamConfig {
            lr,
            beta1,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig::new(1e-3, 0.9)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    name: String,
    value: Tensor,
    grad: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Named parameters with gradient accumulators and Adam state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    slots: Vec<Slot>,
    step: u64,
}

/// Parameters of one set recorded on a graph.
#[derive(Clone)]
pub struct BoundParams<'g> {
    vars: Vec<Var<'g>>,
    names: Vec<String>,
}

impl<'g> BoundParams<'g> {
    pub fn get(&self, name: &str) -> Var<'g> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no bound parameter `{name}`"));
        self.vars[i]
    }

    pub fn vars(&self) -> &[Var<'g>] {
        &self.vars
    }
}

impl ParameterSet {
    pub fn new() -> Self {
        ParameterSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.slots.iter().any(|s| s.name == name) {
            return Err(Error::config(format!("duplicate parameter `{name}`")));
        }
        let zeros = Tensor::zeros(value.shape());
        self.slots.push(Slot {
            name,
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
        });
        Ok(())
    }

    /// Adds an `[fan_in, fan_out]` weight and `[1, fan_out]` bias drawn
    /// uniformly from `±1/√fan_in`.
    pub fn insert_linear(
        &mut self,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..bound)).collect() };
        let w = Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out));
        let b = Tensor::matrix(1, fan_out, draw(fan_out));
        self.insert(format!("{prefix}.w"), w)?;
        self.insert(format!("{prefix}.b"), b)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.name.as_str())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_values(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    fn slot(&self, name: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slot(name).map(|s| &s.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.slot(name).map(|s| &s.grad)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slots
            .iter_mut()
            .find(|s| s.name == name)
            .map(|s| &mut s.value)
    }

    pub fn values(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.value))
    }

    /// Replaces a value keeping its optimizer state; shapes must agree.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .slots
            .iter_mut()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::config(format!("unknown parameter `{name}`")))?;
        if slot.value.shape() != value.shape() {
            return Err(Error::config(format!(
                "parameter `{name}`: shape {:?} vs {:?}",
                slot.value.shape(),
                value.shape()
            )));
        }
        slot.value = value;
        Ok(())
    }

    /// Flat view over every value, in insertion order.
    pub fn flat_get(&self, mut index: usize) -> f64 {
        for s in &self.slots {
            if index < s.value.len() {
                return s.value.data()[index];
            }
            index -= s.value.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_set(&mut self, mut index: usize, value: f64) {
        for s in &mut self.slots {
            if index < s.value.len() {
                s.value.data_mut()[index] = value;
                return;
            }
            index -= s.value.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_grad(&self, mut index: usize) -> f64 {
        for s in &self.slots {
            if index < s.value.len() {
                return s.grad.data()[index];
            }
            index -= s.value.len();
        }
        panic!("flat index out of range")
    }

    /// Records every parameter on `graph`. With `trainable = false` the
    /// values enter as constants and receive no gradient.
    pub fn bind<'g>(&self, graph: &'g Graph, trainable: bool) -> BoundParams<'g> {
        let vars = self
            .slots
            .iter()
            .map(|s| {
                if trainable {
                    graph.param(s.value.clone())
                } else {
                    graph.constant(s.value.clone())
                }
            })
            .collect();
        BoundParams {
            vars,
            names: self.slots.iter().map(|s| s.name.clone()).collect(),
        }
    }

    /// Adds the gradients found for `bound` into the accumulators.
    pub fn accumulate(&mut self, bound: &BoundParams<'_>, grads: &Gradients) {
        for (slot, var) in self.slots.iter_mut().zip(&bound.vars) {
            if let Some(g) = grads.get(*var) {
                for (a, b) in slot.grad.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for s in &mut self.slots {
            s.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.slots
            .iter()
            .flat_map(|s| s.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Bias-corrected Adam update; zeroes gradients afterwards.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for s in &mut self.slots {
            let (value, grad, m, v) = (
                s.value.data_mut(),
                s.grad.data_mut(),
                s.m.data_mut(),
                s.v.data_mut(),
            );
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
                grad[i] = 0.0;
            }
            if !s.value.all_finite() {
                return Err(Error::Numeric(format!(
                    "parameter `{}` became non-finite after Adam step {}",
                    s.name, self.step
                )));
            }
        }
        Ok(())
    }

    /// `self ← ρ·self + (1−ρ)·online`, elementwise.
    pub fn polyak_update(&mut self, online: &ParameterSet, rho: f64) -> Result<()> {
        if self.slots.len() != online.slots.len() {
            return Err(Error::config("polyak_update: parameter count differs"));
        }
        for (t, o) in self.slots.iter_mut().zip(&online.slots) {
            if t.name != o.name || t.value.shape() != o.value.shape() {
                return Err(Error::config(format!(
                    "polyak_update: `{}` {:?} vs `{}` {:?}",
                    t.name,
                    t.value.shape(),
                    o.name,
                    o.value.shape()
                )));
            }
            for (a, b) in t.value.data_mut().iter_mut().zip(o.value.data()) {
                *a = rho * *a + (1.0 - rho) * b;
            }
        }
        Ok(())
    }

    /// Copy of the values only, with fresh optimizer state.
    pub fn fresh_copy(&self) -> ParameterSet {
        let mut out = ParameterSet::new();
        for s in &self.slots {
            out.insert(s.name.clone(), s.value.clone()).unwrap();
        }
        out
    }
}
