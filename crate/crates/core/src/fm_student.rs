//! Velocity network and the flow-matching regression.
//!
//! Time runs from data (`t = 0`) to the coupling endpoint (`t = 1`):
//! `x_t = (1 − t)·x + t·endpoint`, target `endpoint − x`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::couplings::{draw_pairs, CouplingMode, PairBatch};
use crate::datasets::{sample_dataset, DatasetSpec, Label};
use crate::nf_teacher::drop_labels;
use crate::numerics::rng::{normal, Rng};
use crate::numerics::{adam_step, AdamConfig, Bound, Mlp, OptimizerState, Params, Tape, Tensor, Var};
use crate::sampling::VelocityField;
use crate::{Error, Result};

pub const CLASS_EMBED: &str = "class_embed";

#[derive(Debug, Clone, PartialEq)]
pub struct StudentConfig {
    pub n: usize,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub time_dim: usize,
    pub class_dim: usize,
    pub label_dropout: f64,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig {
            n: 2,
            k: 1,
            hidden: vec![256, 256, 256],
            time_dim: 32,
            class_dim: 16,
            label_dropout: 0.1,
        }
    }
}

/// Logit-normal time distribution `sigmoid(a + b·N(0, 1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSampler {
    pub a: f64,
    pub b: f64,
}

impl Default for TimeSampler {
    fn default() -> Self {
        TimeSampler { a: -0.2, b: 1.0 }
    }
}

impl TimeSampler {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(b > 0.0) || !a.is_finite() {
            return Err(Error::invalid("logit-normal needs finite a and b > 0"));
        }
        Ok(TimeSampler { a, b })
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let u = self.a + self.b * normal(rng);
        1.0 / (1.0 + (-u).exp())
    }
}

/// Maximum flow-matching-equivalent noise level of a teacher trained with input noise `eta`.
pub fn max_noise_equivalent(eta: f64) -> f64 {
    eta / (1.0 + eta)
}

/// `(1 − t)·x + t·endpoint`.
pub fn interpolate(x: &[f64], endpoint: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("t = {t} outside [0, 1]")));
    }
    if x.len() != endpoint.len() {
        return Err(Error::Shape {
            op: "interpolate",
            left: vec![x.len()],
            right: vec![endpoint.len()],
        });
    }
    Ok(x.iter().zip(endpoint).map(|(a, e)| (1.0 - t) * a + t * e).collect())
}

/// Fixed sinusoidal features of `t`, frequencies geometric in `[1, 100]`.
pub fn time_embedding(times: &[f64], dim: usize) -> Tensor {
    let half = dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|i| {
            let frac = if half > 1 { i as f64 / (half - 1) as f64 } else { 0.0 };
            (100f64.ln() * frac).exp()
        })
        .collect();
    let mut data = Vec::with_capacity(times.len() * dim);
    for &t in times {
        for &w in &freqs {
            data.push((PI * w * t).sin());
        }
        for &w in &freqs {
            data.push((PI * w * t).cos());
        }
        for _ in 2 * half..dim {
            data.push(t);
        }
    }
    Tensor::from_parts(vec![times.len(), dim], data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityNet {
    config: StudentConfig,
    mlp: Mlp,
    params: Params,
}

impl VelocityNet {
    pub fn new(config: StudentConfig, rng: &mut Rng) -> Result<Self> {
        if config.n < 1 || config.k < 1 || config.time_dim < 1 || config.class_dim < 1 {
            return Err(Error::invalid("student sizes must be positive"));
        }
        if config.hidden.iter().any(|&w| w == 0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        if !(0.0..=1.0).contains(&config.label_dropout) {
            return Err(Error::invalid("label dropout must lie in [0, 1]"));
        }
        let mut sizes = vec![config.n + config.time_dim + config.class_dim];
        sizes.extend(&config.hidden);
        sizes.push(config.n);
        let mlp = Mlp::new("mlp", sizes);
        let mut params = Params::new();
        let emb = crate::numerics::rng::normal_matrix(rng, config.k + 1, config.class_dim);
        params.insert(CLASS_EMBED, emb);
        mlp.init(&mut params, rng, false);
        Ok(VelocityNet { config, mlp, params })
    }

    pub fn from_parts(config: StudentConfig, params: Params) -> Result<Self> {
        let mut net = VelocityNet::new(config, &mut crate::numerics::rng::seeded(0))?;
        if params.len() != net.params.len() {
            return Err(Error::invalid("student parameter count mismatch"));
        }
        for (name, p) in net.params.iter() {
            match params.get(name) {
                Some(q) if q.shape() == p.shape() => {}
                _ => return Err(Error::Missing(format!("student parameter {name}"))),
            }
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &StudentConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Network output on a tape for rows `x_t` at per-row times.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        xt: Var,
        times: &[f64],
        labels: &[Label],
    ) -> Result<Var> {
        let rows = tape.value(xt).rows();
        if times.len() != rows || labels.len() != rows {
            return Err(Error::invalid("times/labels must have one entry per row"));
        }
        let k = self.config.k;
        let idx = labels
            .iter()
            .map(|&c| {
                if c.is_valid(k) {
                    Ok(c.embedding_row(k))
                } else {
                    Err(Error::invalid(format!("label {c} out of {k} classes")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let temb = tape.constant(time_embedding(times, self.config.time_dim));
        let cemb = tape.gather_rows(bound.var(CLASS_EMBED)?, &idx)?;
        let inp = tape.concat_cols(xt, temb)?;
        let inp = tape.concat_cols(inp, cemb)?;
        self.mlp.forward(tape, bound, inp)
    }

    /// Loss graph `mean_i ‖net(x_t, c, t) − (endpoint − x)‖²` for given times and labels.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        pairs: &PairBatch,
        times: &[f64],
        labels: &[Label],
    ) -> Result<Var> {
        let b = pairs.len();
        let n = pairs.x.cols();
        let mut xt = Vec::with_capacity(b * n);
        let mut target = Vec::with_capacity(b * n);
        for (i, &t) in times.iter().enumerate() {
            for (&x, &e) in pairs.x.row(i).iter().zip(pairs.endpoint.row(i)) {
                xt.push((1.0 - t) * x + t * e);
                target.push(e - x);
            }
        }
        let xt = tape.constant(Tensor::new(vec![b, n], xt)?);
        let target = tape.constant(Tensor::new(vec![b, n], target)?);
        let pred = self.forward_on_tape(tape, bound, xt, times, labels)?;
        let diff = tape.sub(pred, target)?;
        let sq = tape.square(diff)?;
        let total = tape.sum(sq)?;
        tape.scale(total, 1.0 / b as f64)
    }

    /// Draws per-example times and dropped labels, returns loss and optional gradients.
    pub fn fm_loss_and_grads(
        &self,
        pairs: &PairBatch,
        sampler: &TimeSampler,
        rng: &mut Rng,
        with_grads: bool,
    ) -> Result<(f64, BTreeMap<String, Tensor>)> {
        if pairs.is_empty() {
            return Err(Error::invalid("empty pair batch"));
        }
        let times: Vec<f64> = (0..pairs.len()).map(|_| sampler.sample(rng)).collect();
        let labels = drop_labels(&pairs.c, self.config.label_dropout, rng);
        let mut tape = Tape::new();
        let bound = if with_grads {
            self.params.bind(&mut tape)
        } else {
            self.params.bind_frozen(&mut tape)
        };
        let loss = self.loss_on_tape(&mut tape, &bound, pairs, &times, &labels)?;
        let value = tape.value(loss).item();
        let grads = if with_grads {
            let g = tape.backward(loss)?;
            bound.collect(&self.params, &g)
        } else {
            BTreeMap::new()
        };
        Ok((value, grads))
    }

    pub fn fm_loss(&self, pairs: &PairBatch, sampler: &TimeSampler, rng: &mut Rng) -> Result<f64> {
        Ok(self.fm_loss_and_grads(pairs, sampler, rng, false)?.0)
    }

    /// Adam training on fresh data under a coupling; returns the per-step loss.
    pub fn train(
        &mut self,
        mode: &CouplingMode,
        spec: &DatasetSpec,
        steps: usize,
        batch_size: usize,
        adam: AdamConfig,
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        if spec.n != self.config.n || spec.k > self.config.k {
            return Err(Error::invalid("dataset does not fit the student"));
        }
        if let CouplingMode::NfTeacher(t) = mode {
            if t.sigma_f().is_none() {
                return Err(Error::Missing("teacher sigma_f is unset".into()));
            }
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        let sampler = TimeSampler::default();
        let mut state = OptimizerState::new(adam);
        let mut history = Vec::with_capacity(steps);
        for step in 0..steps {
            let data = sample_dataset(spec, batch_size, rng)?;
            let pairs = draw_pairs(mode, &data, rng)?;
            let (loss, grads) = self.fm_loss_and_grads(&pairs, &sampler, rng, true)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            adam_step(&mut self.params, &grads, &mut state)?;
            history.push(loss);
        }
        Ok(history)
    }
}

impl VelocityField for VelocityNet {
    fn dim(&self) -> usize {
        self.config.n
    }

    fn classes(&self) -> usize {
        self.config.k
    }

    fn velocity(&self, x: &Tensor, t: f64, labels: &[Label]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let times = vec![t; x.rows()];
        let out = self.forward_on_tape(&mut tape, &bound, xv, &times, labels)?;
        Ok(tape.value(out).clone())
    }
}

/// Trailing-window mean, the smoothing used for loss comparisons.
pub fn smoothed_tail(history: &[f64], window: usize) -> f64 {
    let w = window.min(history.len()).max(1);
    history[history.len().saturating_sub(w)..].iter().sum::<f64>() / w as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_gradient;
    use crate::numerics::rng::{normal_matrix, seeded};

    fn tiny(hidden: Vec<usize>) -> VelocityNet {
        VelocityNet::new(
            StudentConfig {
                n: 2,
                k: 3,
                hidden,
                time_dim: 4,
                class_dim: 3,
                label_dropout: 0.1,
            },
            &mut seeded(1),
        )
        .unwrap()
    }

    fn zero_net() -> VelocityNet {
        let mut net = tiny(vec![4]);
        for (_, p) in net.params_mut().iter_mut() {
            p.data_mut().fill(0.0);
        }
        net
    }

    fn pairs(seed: u64, rows: usize) -> PairBatch {
        let mut rng = seeded(seed);
        PairBatch::new(
            normal_matrix(&mut rng, rows, 2),
            normal_matrix(&mut rng, rows, 2),
            (0..rows).map(|i| Label::Class(i % 3)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn interpolate_examples() {
        assert_eq!(interpolate(&[1.0, 2.0], &[5.0, 6.0], 0.0).unwrap(), vec![1.0, 2.0]);
        assert_eq!(interpolate(&[1.0, 2.0], &[5.0, 6.0], 1.0).unwrap(), vec![5.0, 6.0]);
        assert_eq!(interpolate(&[0.0, 0.0], &[2.0, 4.0], 0.25).unwrap(), vec![0.5, 1.0]);
        assert!(interpolate(&[0.0], &[1.0], 1.5).is_err());
        assert!(interpolate(&[0.0], &[1.0], -0.1).is_err());
    }

    #[test]
    fn max_noise_examples() {
        assert_eq!(max_noise_equivalent(0.0), 0.0);
        assert_eq!(max_noise_equivalent(1.0), 0.5);
        assert!((max_noise_equivalent(0.05) - 0.047_619_047_619_047_616).abs() < 1e-15);
    }

    #[test]
    fn zero_net_loss_is_mean_squared_gap() {
        let net = zero_net();
        let p = pairs(3, 8);
        let loss = net.fm_loss(&p, &TimeSampler::default(), &mut seeded(0)).unwrap();
        assert!((loss - p.mean_sq_cost()).abs() < 1e-12);

        let degenerate = PairBatch::new(p.x.clone(), p.x.clone(), p.c.clone()).unwrap();
        assert_eq!(net.fm_loss(&degenerate, &TimeSampler::default(), &mut seeded(0)).unwrap(), 0.0);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let net = tiny(vec![8, 8]);
        let p = pairs(5, 6);
        let sampler = TimeSampler::default();
        let (_, grads) = net.fm_loss_and_grads(&p, &sampler, &mut seeded(9), true).unwrap();
        for (name, g) in &grads {
            let fd = finite_difference_gradient(
                |w| {
                    let mut probe = net.clone();
                    *probe.params_mut().get_mut(name).unwrap() = w.clone();
                    probe.fm_loss(&p, &sampler, &mut seeded(9))
                },
                net.params().get(name).unwrap(),
                1e-5,
            )
            .unwrap();
            for (a, b) in g.data().iter().zip(fd.data()) {
                assert!((a - b).abs() / a.abs().max(1.0) < 1e-4, "{name}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_steps_and_determinism() {
        let spec = DatasetSpec::gauss_mix_circle(2, 3, 2.0, 0.1).unwrap();
        let mut net = tiny(vec![8]);
        let before = net.clone();
        assert!(net
            .train(&CouplingMode::Independent, &spec, 0, 8, AdamConfig::default(), &mut seeded(0))
            .unwrap()
            .is_empty());
        assert_eq!(net, before);

        let run = || {
            let mut n = tiny(vec![8]);
            n.train(&CouplingMode::Independent, &spec, 15, 8, AdamConfig::default(), &mut seeded(2))
                .unwrap();
            n
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn time_sampler_rejects_bad_scale() {
        assert!(TimeSampler::new(0.0, 0.0).is_err());
        assert!(TimeSampler::new(-0.2, 1.0).is_ok());
    }

    #[test]
    fn embedding_shape() {
        let e = time_embedding(&[0.0, 0.5, 1.0], 32);
        assert_eq!(e.shape(), &[3, 32]);
        assert_eq!(e.row(0)[0], 0.0);
        assert_eq!(e.row(0)[16], 1.0);
    }
}
