use std::collections::BTreeMap;

use super::params::Params;
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }
}

/// One bias-corrected Adam update over every parameter in `params`.
///
/// `grads` must carry exactly one tensor per parameter with matching shape.
pub fn adam_step(params: &mut Params, grads: &BTreeMap<String, Tensor>, state: &mut OptimizerState) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::Missing(format!("no gradient for parameter {name}")))?;
        if g.shape() != p.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    if grads.len() != params.len() {
        return Err(Error::invalid("gradients for unknown parameters"));
    }

    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    for (name, p) in params.iter_mut() {
        let g = &grads[name];
        let m = state
            .first
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        let v = state
            .second
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        for (((w, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64) -> Params {
        let mut p = Params::new();
        p.insert("w", Tensor::scalar(w));
        p
    }

    fn grad(g: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("w".to_string(), Tensor::scalar(g))])
    }

    #[test]
    fn zero_gradient_is_exact_noop() {
        let mut p = single(1.25);
        let mut st = OptimizerState::new(AdamConfig::default());
        adam_step(&mut p, &grad(0.0), &mut st).unwrap();
        assert_eq!(p.get("w").unwrap().item(), 1.25);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn descends_on_square() {
        let mut p = single(1.0);
        let mut st = OptimizerState::new(AdamConfig {
            lr: 0.1,
            ..Default::default()
        });
        // d/dw w² = 2w
        adam_step(&mut p, &grad(2.0), &mut st).unwrap();
        assert!(p.get("w").unwrap().item() < 1.0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = single(0.3);
            let mut st = OptimizerState::new(AdamConfig::default());
            for k in 0..5 {
                adam_step(&mut p, &grad(0.1 * k as f64 - 0.2), &mut st).unwrap();
            }
            (p, st)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.get("w").unwrap().item().to_bits(), b.get("w").unwrap().item().to_bits());
        assert_eq!(sa, sb);
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut p = single(1.0);
        let mut st = OptimizerState::new(AdamConfig::default());
        let bad = BTreeMap::from([("w".to_string(), Tensor::zeros(&[2]))]);
        assert!(matches!(adam_step(&mut p, &bad, &mut st), Err(Error::Shape { .. })));
        assert!(adam_step(&mut p, &BTreeMap::new(), &mut st).is_err());
        assert_eq!(st.step, 0);
    }
}
