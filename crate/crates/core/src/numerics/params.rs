use std::collections::BTreeMap;

use super::rng::{normal, Rng};
use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Named parameter tensors in canonical (lexicographic) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    map: BTreeMap<String, Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.map.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.map.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn count(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }

    /// Registers every parameter as a differentiable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .map
            .iter()
            .map(|(k, t)| (k.clone(), tape.param(t.clone())))
            .collect();
        Bound { vars }
    }

    /// Registers every parameter as a constant (inference only).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .map
            .iter()
            .map(|(k, t)| (k.clone(), tape.constant(t.clone())))
            .collect();
        Bound { vars }
    }
}

/// Parameter name → tape variable.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Missing(format!("unknown parameter {name}")))
    }

    /// Gradient per parameter name; unreached parameters get zeros.
    pub fn collect(&self, params: &Params, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, &v)| {
                let shape = params.get(k).map(|t| t.shape().to_vec()).unwrap_or_default();
                (k.clone(), grads.get_or_zeros(v, &shape))
            })
            .collect()
    }
}

/// Dense layers with GELU between them (none after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    prefix: String,
    sizes: Vec<usize>,
}

impl Mlp {
    /// `sizes` lists input width, hidden widths, output width.
    pub fn new(prefix: impl Into<String>, sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output widths");
        Mlp {
            prefix: prefix.into(),
            sizes,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn weight(&self, layer: usize) -> String {
        format!("{}.l{layer}.w", self.prefix)
    }

    fn bias(&self, layer: usize) -> String {
        format!("{}.l{layer}.b", self.prefix)
    }

    /// He-normal hidden layers; the output layer is either zeroed or
    /// Xavier-normal.
    pub fn init(&self, params: &mut Params, rng: &mut Rng, zero_last: bool) {
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let last = l + 1 == layers;
            let w = if last && zero_last {
                Tensor::zeros(&[fan_in, fan_out])
            } else {
                let std = if last {
                    (2.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (2.0 / fan_in as f64).sqrt()
                };
                let data = (0..fan_in * fan_out).map(|_| std * normal(rng)).collect();
                Tensor::from_parts(vec![fan_in, fan_out], data)
            };
            params.insert(self.weight(l), w);
            params.insert(self.bias(l), Tensor::zeros(&[fan_out]));
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let layers = self.sizes.len() - 1;
        let mut h = x;
        for l in 0..layers {
            h = tape.affine(h, bound.var(&self.weight(l))?, bound.var(&self.bias(l))?)?;
            if l + 1 < layers {
                h = tape.gelu(h)?;
            }
        }
        Ok(h)
    }
}
