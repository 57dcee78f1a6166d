//! Named parameters and the AdamW update.

use std::collections::HashMap;

use crate::{Real, Result, Tensor, TensorError};

pub struct Param<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
    moment1: Vec<T>,
    moment2: Vec<T>,
}

/// Ordered collection of trainable parameters. Iteration order is insertion
/// order, which keeps optimizer sweeps and checkpoints deterministic.
pub struct ParamStore<T: Real> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
    step: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
            step: 0,
        }
    }

    /// Registers a parameter and returns its graph handle.
    pub fn add(&mut self, name: impl Into<String>, data: Vec<T>, shape: &[usize]) -> Result<Tensor<T>> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Manifest(format!("duplicate parameter {name}")));
        }
        let n = data.len();
        let value = Tensor::param_leaf(data, shape)?;
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            value: value.clone(),
            moment1: vec![T::zero(); n],
            moment2: vec![T::zero(); n],
        });
        Ok(value)
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.value.zero_grad();
        }
    }

    /// Decoupled-weight-decay Adam step over all parameters. Parameters with
    /// no populated adjoint are treated as zero-gradient (state still decays
    /// consistently). Adjoints are cleared afterward.
    pub fn adamw_step(&mut self, cfg: &AdamW) {
        self.step += 1;
        let t = self.step as f64;
        let b1 = T::cast(cfg.beta1);
        let b2 = T::cast(cfg.beta2);
        let one_b1 = T::cast(1.0 - cfg.beta1);
        let one_b2 = T::cast(1.0 - cfg.beta2);
        let corr1 = T::cast(1.0 / (1.0 - cfg.beta1.powf(t)));
        let corr2 = T::cast(1.0 / (1.0 - cfg.beta2.powf(t)));
        let lr = T::cast(cfg.lr);
        let eps = T::cast(cfg.eps);
        let wd = T::cast(cfg.lr * cfg.weight_decay);
        for p in &mut self.params {
            let grad = p.value.grad_vec();
            let mut data = p.value.0.data.borrow_mut();
            for i in 0..data.len() {
                let g = grad.as_ref().map_or(T::zero(), |g| g[i]);
                p.moment1[i] = b1 * p.moment1[i] + one_b1 * g;
                p.moment2[i] = b2 * p.moment2[i] + one_b2 * g * g;
                let mhat = p.moment1[i] * corr1;
                let vhat = p.moment2[i] * corr2;
                let w = data[i];
                data[i] = w - lr * (mhat / (vhat.sqrt() + eps)) - wd * w;
            }
        }
        self.zero_grad();
    }

    /// Copies values from `other` into same-named parameters; returns how
    /// many were loaded. Shapes must match for names that exist.
    pub fn load_matching(&mut self, tensors: &[crate::checkpoint::NamedTensor<T>]) -> Result<usize> {
        let mut loaded = 0;
        for t in tensors {
            if let Some(&i) = self.index.get(&t.name) {
                let p = &self.params[i];
                if p.value.shape() != t.shape.as_slice() {
                    return Err(TensorError::Manifest(format!(
                        "parameter {} shape {:?} vs checkpoint {:?}",
                        t.name,
                        p.value.shape(),
                        t.shape
                    )));
                }
                p.value.set_data(&t.data);
                loaded += 1;
            }
        }
        Ok(loaded)
    }

    /// Strict restore: every parameter must be present in the checkpoint.
    pub fn load_all(&mut self, tensors: &[crate::checkpoint::NamedTensor<T>]) -> Result<()> {
        let by_name: HashMap<&str, &crate::checkpoint::NamedTensor<T>> =
            tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        for p in &self.params {
            let t = by_name
                .get(p.name.as_str())
                .ok_or_else(|| TensorError::UnknownParameter(p.name.clone()))?;
            if p.value.shape() != t.shape.as_slice() {
                return Err(TensorError::Manifest(format!(
                    "parameter {} shape {:?} vs checkpoint {:?}",
                    p.name,
                    p.value.shape(),
                    t.shape
                )));
            }
            p.value.set_data(&t.data);
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<crate::checkpoint::NamedTensor<T>> {
        self.params
            .iter()
            .map(|p| crate::checkpoint::NamedTensor {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.to_vec(),
            })
            .collect()
    }
}
