//! Conditional affine-coupling normalizing flow.
//!
//! Each block leaves the masked coordinates untouched and maps the rest as
//! `y = x·exp(s) + b`, where `(s, b)` come from an MLP of the masked
//! coordinates and a class embedding. The scale is squashed to
//! `clamp·tanh(raw/clamp)`, so the log-determinant is the plain sum of `s`
//! and the inverse is `(y − b)·exp(−s)`.

use std::collections::BTreeMap;

use crate::datasets::{sample_dataset, DatasetSpec, Label, LabeledBatch};
use crate::numerics::rng::{normal_matrix, uniform, Rng};
use crate::numerics::{adam_step, AdamConfig, Bound, Mlp, OptimizerState, Params, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherConfig {
    pub n: usize,
    pub k: usize,
    pub blocks: usize,
    pub width: usize,
    pub embed_dim: usize,
    pub clamp: f64,
    /// Input noise level η.
    pub eta: f64,
    pub label_dropout: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            n: 2,
            k: 1,
            blocks: 8,
            width: 64,
            embed_dim: 16,
            clamp: 4.0,
            eta: 0.05,
            label_dropout: 0.1,
        }
    }
}

impl TeacherConfig {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("flow dimension must be at least 2"));
        }
        if self.k < 1 || self.blocks < 1 || self.width < 1 || self.embed_dim < 1 {
            return Err(Error::invalid("teacher sizes must be positive"));
        }
        if !(self.clamp > 0.0) {
            return Err(Error::invalid("scale clamp must be positive"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.label_dropout) {
            return Err(Error::invalid("label dropout must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One affine coupling; `mask[j] == 1` marks a pass-through coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock {
    mask: Vec<f64>,
    net: Mlp,
}

impl CouplingBlock {
    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    /// Prefix of this block's parameter names.
    pub fn name(index: usize) -> String {
        format!("block{index:02}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTeacher {
    config: TeacherConfig,
    blocks: Vec<CouplingBlock>,
    params: Params,
    sigma_f: Option<Vec<f64>>,
    trained_steps: u64,
}

pub const EMBED: &str = "embed";

/// Randomly replaces labels by `Label::Null` with probability `p`.
pub fn drop_labels(labels: &[Label], p: f64, rng: &mut Rng) -> Vec<Label> {
    labels
        .iter()
        .map(|&c| if uniform(rng) < p { Label::Null } else { c })
        .collect()
}

fn batch_mask(mask: &[f64], rows: usize) -> (Tensor, Tensor) {
    let keep: Vec<f64> = (0..rows).flat_map(|_| mask.iter().copied()).collect();
    let free: Vec<f64> = keep.iter().map(|m| 1.0 - m).collect();
    let shape = vec![rows, mask.len()];
    (
        Tensor::new(shape.clone(), keep).expect("finite mask"),
        Tensor::new(shape, free).expect("finite mask"),
    )
}

fn check_labels(labels: &[Label], rows: usize, k: usize) -> Result<Vec<usize>> {
    if labels.len() != rows {
        return Err(Error::Shape {
            op: "labels",
            left: vec![rows],
            right: vec![labels.len()],
        });
    }
    labels
        .iter()
        .map(|&c| {
            if c.is_valid(k) {
                Ok(c.embedding_row(k))
            } else {
                Err(Error::invalid(format!("label {c} out of {k} classes")))
            }
        })
        .collect()
}

struct BlockOut {
    y: Var,
    s: Var,
    b: Var,
}

impl FlowTeacher {
    /// Fresh teacher whose blocks start at the identity map.
    pub fn new(config: TeacherConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let n = config.n;
        let mut params = Params::new();
        let emb = normal_matrix(rng, config.k + 1, config.embed_dim);
        params.insert(EMBED, emb);
        let blocks = (0..config.blocks)
            .map(|i| {
                // Alternate coordinate parity so every coordinate gets transformed.
                let mask = (0..n).map(|j| if j % 2 == i % 2 { 1.0 } else { 0.0 }).collect();
                let net = Mlp::new(
                    CouplingBlock::name(i),
                    vec![n + config.embed_dim, config.width, config.width, 2 * n],
                );
                net.init(&mut params, rng, true);
                CouplingBlock { mask, net }
            })
            .collect();
        Ok(FlowTeacher {
            config,
            blocks,
            params,
            sigma_f: None,
            trained_steps: 0,
        })
    }

    /// Rebuilds a teacher from stored parameters (checkpoint loading).
    pub fn from_parts(
        config: TeacherConfig,
        params: Params,
        sigma_f: Option<Vec<f64>>,
        trained_steps: u64,
    ) -> Result<Self> {
        let mut rng = crate::numerics::rng::seeded(0);
        let mut t = FlowTeacher::new(config, &mut rng)?;
        for (name, p) in t.params.iter() {
            match params.get(name) {
                Some(q) if q.shape() == p.shape() => {}
                Some(q) => {
                    return Err(Error::Shape {
                        op: "teacher parameter",
                        left: p.shape().to_vec(),
                        right: q.shape().to_vec(),
                    })
                }
                None => return Err(Error::Missing(format!("teacher parameter {name}"))),
            }
        }
        if params.len() != t.params.len() {
            return Err(Error::invalid("unexpected teacher parameters"));
        }
        if let Some(s) = &sigma_f {
            if s.len() != t.config.n || s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid("sigma_f must be a positive vector of length n"));
            }
        }
        t.params = params;
        t.sigma_f = sigma_f;
        t.trained_steps = trained_steps;
        Ok(t)
    }

    pub fn config(&self) -> &TeacherConfig {
        &self.config
    }

    pub fn eta(&self) -> f64 {
        self.config.eta
    }

    pub fn dim(&self) -> usize {
        self.config.n
    }

    pub fn blocks(&self) -> &[CouplingBlock] {
        &self.blocks
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn sigma_f(&self) -> Option<&[f64]> {
        self.sigma_f.as_deref()
    }

    pub fn set_sigma_f(&mut self, s: Vec<f64>) -> Result<()> {
        if s.len() != self.config.n || s.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("sigma_f must be a positive vector of length n"));
        }
        self.sigma_f = Some(s);
        Ok(())
    }

    pub fn trained_steps(&self) -> u64 {
        self.trained_steps
    }

    fn block_forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        block: &CouplingBlock,
        x: Var,
        emb: Var,
        masks: (Var, Var),
    ) -> Result<BlockOut> {
        let n = self.config.n;
        let c = self.config.clamp;
        let (keep, free) = masks;
        let kept = tape.mul(x, keep)?;
        let inp = tape.concat_cols(kept, emb)?;
        let h = block.net.forward(tape, bound, inp)?;
        let raw = tape.slice_cols(h, 0, n)?;
        let shift = tape.slice_cols(h, n, 2 * n)?;
        let squashed = tape.scale(raw, 1.0 / c)?;
        let squashed = tape.tanh(squashed)?;
        let s = tape.scale(squashed, c)?;
        let s = tape.mul(s, free)?;
        let b = tape.mul(shift, free)?;
        let es = tape.exp(s)?;
        let y = tape.mul(x, es)?;
        let y = tape.add(y, b)?;
        Ok(BlockOut { y, s, b })
    }

    /// Forward pass on a tape: returns `z` (`[rows, n]`) and log|det J| (`[rows, 1]`).
    pub fn forward_on_tape(&self, tape: &mut Tape, bound: &Bound, x: Var, labels: &[Label]) -> Result<(Var, Var)> {
        let rows = tape.value(x).rows();
        let (_, cols) = tape.value(x).dims2("nf_forward")?;
        if cols != self.config.n {
            return Err(Error::Shape {
                op: "nf_forward",
                left: vec![rows, cols],
                right: vec![rows, self.config.n],
            });
        }
        let rows_idx = check_labels(labels, rows, self.config.k)?;
        let emb = tape.gather_rows(bound.var(EMBED)?, &rows_idx)?;
        let mut h = x;
        let mut logdet: Option<Var> = None;
        for (i, block) in self.blocks.iter().enumerate() {
            let (keep, free) = batch_mask(&block.mask, rows);
            let masks = (tape.constant(keep), tape.constant(free));
            let out = self.block_forward(tape, bound, block, h, emb, masks)?;
            if !tape.value(out.y).is_finite() {
                return Err(Error::NonFinite(format!("coupling block {i} output")));
            }
            let ld = tape.row_sum(out.s)?;
            logdet = Some(match logdet {
                Some(acc) => tape.add(acc, ld)?,
                None => ld,
            });
            h = out.y;
        }
        let logdet = logdet.expect("at least one block");
        Ok((h, logdet))
    }

    /// `z = f(x', c)` and the per-row log-determinant.
    pub fn nf_forward(&self, x: &Tensor, labels: &[Label]) -> Result<(Tensor, Vec<f64>)> {
        if !x.is_finite() {
            return Err(Error::NonFinite("nf_forward input".into()));
        }
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let (z, ld) = self.forward_on_tape(&mut tape, &bound, xv, labels)?;
        Ok((tape.value(z).clone(), tape.value(ld).data().to_vec()))
    }

    /// `x' = f⁻¹(z, c)`, inverting the blocks in reverse order.
    pub fn nf_inverse(&self, z: &Tensor, labels: &[Label]) -> Result<Tensor> {
        if !z.is_finite() {
            return Err(Error::NonFinite("nf_inverse input".into()));
        }
        let (rows, cols) = z.dims2("nf_inverse")?;
        if cols != self.config.n {
            return Err(Error::Shape {
                op: "nf_inverse",
                left: vec![rows, cols],
                right: vec![rows, self.config.n],
            });
        }
        let rows_idx = check_labels(labels, rows, self.config.k)?;
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let emb = tape.gather_rows(bound.var(EMBED)?, &rows_idx)?;
        let mut y = z.clone();
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let (keep, free) = batch_mask(&block.mask, rows);
            let masks = (tape.constant(keep), tape.constant(free));
            // Masked coordinates of y equal those of x, so (s, b) are recoverable.
            let yv = tape.constant(y.clone());
            let out = self.block_forward(&mut tape, &bound, block, yv, emb, masks)?;
            let s = tape.value(out.s);
            let b = tape.value(out.b);
            let mut x = y.clone();
            for ((xv, &sv), &bv) in x.data_mut().iter_mut().zip(s.data()).zip(b.data()) {
                *xv = (*xv - bv) * (-sv).exp();
            }
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("coupling block {i} inverse")));
            }
            y = x;
        }
        Ok(y)
    }

    /// Loss graph for one batch given pre-drawn noise and (dropped) labels.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: &Tensor,
        noise: &Tensor,
        labels: &[Label],
    ) -> Result<Var> {
        let eta = self.config.eta;
        let noisy = x.zip_map(noise, "nf_loss", |a, e| a + eta * e)?;
        let xv = tape.constant(noisy);
        let (z, ld) = self.forward_on_tape(tape, bound, xv, labels)?;
        let sq = tape.square(z)?;
        let energy = tape.row_sum(sq)?;
        let energy = tape.scale(energy, 0.5)?;
        let per = tape.sub(energy, ld)?;
        tape.mean(per)
    }

    fn draw_loss_inputs(&self, batch: &LabeledBatch, rng: &mut Rng) -> (Tensor, Vec<Label>) {
        let noise = normal_matrix(rng, batch.len(), self.config.n);
        let labels = drop_labels(&batch.c, self.config.label_dropout, rng);
        (noise, labels)
    }

    /// Mean of `½‖f(x + ηε', c_dropped)‖² − log|det|` over the batch.
    pub fn nf_loss(&self, batch: &LabeledBatch, rng: &mut Rng) -> Result<f64> {
        Ok(self.nf_loss_and_grads(batch, rng, false)?.0)
    }

    /// Loss and, when requested, its gradient per parameter.
    pub fn nf_loss_and_grads(
        &self,
        batch: &LabeledBatch,
        rng: &mut Rng,
        with_grads: bool,
    ) -> Result<(f64, BTreeMap<String, Tensor>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let (noise, labels) = self.draw_loss_inputs(batch, rng);
        let mut tape = Tape::new();
        let bound = if with_grads {
            self.params.bind(&mut tape)
        } else {
            self.params.bind_frozen(&mut tape)
        };
        let loss = self.loss_on_tape(&mut tape, &bound, &batch.x, &noise, &labels)?;
        let value = tape.value(loss).item();
        let grads = if with_grads {
            let g = tape.backward(loss)?;
            bound.collect(&self.params, &g)
        } else {
            BTreeMap::new()
        };
        Ok((value, grads))
    }

    /// Maximum-likelihood training with Adam on fresh batches.
    pub fn train(
        &mut self,
        spec: &DatasetSpec,
        steps: usize,
        batch_size: usize,
        adam: AdamConfig,
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        if spec.n != self.config.n || spec.k > self.config.k {
            return Err(Error::invalid(format!(
                "dataset (n={}, k={}) does not fit teacher (n={}, k={})",
                spec.n, spec.k, self.config.n, self.config.k
            )));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        let mut state = OptimizerState::new(adam);
        let mut history = Vec::with_capacity(steps);
        for step in 0..steps {
            let batch = sample_dataset(spec, batch_size, rng)?;
            let (loss, grads) = self.nf_loss_and_grads(&batch, rng, true).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged { step, loss: f64::NAN },
                e => e,
            })?;
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            adam_step(&mut self.params, &grads, &mut state)?;
            history.push(loss);
            self.trained_steps += 1;
        }
        Ok(history)
    }

    /// Estimates σ_f² = E[f(x + ηε', c)²] per dimension and stores σ_f.
    pub fn estimate_sigma_f(&mut self, spec: &DatasetSpec, sample_count: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        if sample_count < 1000 {
            return Err(Error::invalid("sigma_f estimation needs at least 1000 samples"));
        }
        let n = self.config.n;
        let mut acc = vec![0.0; n];
        let mut remaining = sample_count;
        while remaining > 0 {
            let take = remaining.min(4096);
            let batch = sample_dataset(spec, take, rng)?;
            let z = self.raw_encode(&batch.x, &batch.c, rng)?;
            for r in 0..take {
                for (a, v) in acc.iter_mut().zip(z.row(r)) {
                    *a += v * v;
                }
            }
            remaining -= take;
        }
        let sigma: Vec<f64> = acc.iter().map(|a| (a / sample_count as f64).sqrt()).collect();
        if let Some(j) = sigma.iter().position(|s| !(*s >= 1e-6)) {
            return Err(Error::NonFinite(format!("degenerate sigma_f in dimension {j} ({})", sigma[j])));
        }
        self.sigma_f = Some(sigma.clone());
        Ok(sigma)
    }

    /// `f(x + ηε', c)` with fresh noise, without σ_f normalization.
    pub fn raw_encode(&self, x: &Tensor, labels: &[Label], rng: &mut Rng) -> Result<Tensor> {
        let noise = normal_matrix(rng, x.rows(), self.config.n);
        let eta = self.config.eta;
        let noisy = x.zip_map(&noise, "encode", |a, e| a + eta * e)?;
        Ok(self.nf_forward(&noisy, labels)?.0)
    }

    /// Coupling endpoint `z_ε' = f(x + ηε', c) / σ_f`.
    pub fn encode_coupling(&self, x: &Tensor, labels: &[Label], rng: &mut Rng) -> Result<Tensor> {
        let sigma = self
            .sigma_f
            .as_ref()
            .ok_or_else(|| Error::Missing("teacher sigma_f is unset".into()))?;
        let mut z = self.raw_encode(x, labels, rng)?;
        let n = self.config.n;
        for (i, v) in z.data_mut().iter_mut().enumerate() {
            *v /= sigma[i % n];
        }
        Ok(z)
    }

    /// Teacher samples `f⁻¹(ε, c)` for qualitative plots.
    pub fn generate(&self, labels: &[Label], rng: &mut Rng) -> Result<Tensor> {
        let z = normal_matrix(rng, labels.len(), self.config.n);
        self.nf_inverse(&z, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::seeded;
    use crate::numerics::finite_difference_gradient;

    fn small(blocks: usize, eta: f64) -> FlowTeacher {
        let cfg = TeacherConfig {
            n: 2,
            k: 2,
            blocks,
            width: 8,
            embed_dim: 3,
            eta,
            ..Default::default()
        };
        FlowTeacher::new(cfg, &mut seeded(11)).unwrap()
    }

    fn randomize(t: &mut FlowTeacher, seed: u64, std: f64) {
        let mut rng = seeded(seed);
        for (_, p) in t.params_mut().iter_mut() {
            for v in p.data_mut() {
                *v += std * crate::numerics::rng::normal(&mut rng);
            }
        }
    }

    fn points(rows: usize, seed: u64) -> Tensor {
        normal_matrix(&mut seeded(seed), rows, 2)
    }

    #[test]
    fn identity_at_init() {
        let t = small(4, 0.0);
        let x = points(5, 1);
        let labels = vec![Label::Class(1); 5];
        let (z, ld) = t.nf_forward(&x, &labels).unwrap();
        assert_eq!(z, x);
        assert!(ld.iter().all(|&v| v == 0.0));
        assert_eq!(t.nf_inverse(&x, &labels).unwrap(), x);
    }

    fn hand_set_doubling() -> FlowTeacher {
        let mut t = small(1, 0.0);
        // Block 0 passes coordinate 0 and transforms coordinate 1.
        assert_eq!(t.blocks()[0].mask(), &[1.0, 0.0]);
        let c = t.config().clamp;
        let raw = c * (2f64.ln() / c).atanh();
        let name = format!("{}.l2.b", CouplingBlock::name(0));
        let b = t.params_mut().get_mut(&name).unwrap();
        b.data_mut()[1] = raw;
        t
    }

    #[test]
    fn hand_set_block_doubles() {
        let t = hand_set_doubling();
        let x = Tensor::matrix(1, 2, vec![0.7, 1.5]).unwrap();
        let (z, ld) = t.nf_forward(&x, &[Label::Class(0)]).unwrap();
        assert!((z.data()[0] - 0.7).abs() < 1e-15);
        assert!((z.data()[1] - 3.0).abs() < 1e-12);
        assert!((ld[0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_set_block_inverse_halves() {
        let t = hand_set_doubling();
        let z = Tensor::matrix(1, 2, vec![0.7, 3.0]).unwrap();
        let x = t.nf_inverse(&z, &[Label::Null]).unwrap();
        assert!((x.data()[1] - 1.5).abs() < 1e-12);
        assert_eq!(x.data()[0], 0.7);
    }

    #[test]
    fn round_trip_random_weights() {
        let mut t = small(6, 0.0);
        randomize(&mut t, 5, 0.3);
        let x = points(1000, 2);
        let labels: Vec<Label> = (0..1000)
            .map(|i| if i % 3 == 0 { Label::Null } else { Label::Class(i % 2) })
            .collect();
        let (z, _) = t.nf_forward(&x, &labels).unwrap();
        let back = t.nf_inverse(&z, &labels).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-8);
    }

    #[test]
    fn identity_loss_is_half_norm() {
        let t = small(2, 0.0);
        let x = points(16, 3);
        let batch = LabeledBatch::new(x.clone(), vec![Label::Class(0); 16]).unwrap();
        let loss = t.nf_loss(&batch, &mut seeded(0)).unwrap();
        let expected = (0..16).map(|r| 0.5 * x.row(r).iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / 16.0;
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut t = small(2, 0.05);
        randomize(&mut t, 8, 0.2);
        let batch = LabeledBatch::new(points(6, 4), vec![Label::Class(0), Label::Class(1), Label::Null, Label::Class(1), Label::Class(0), Label::Class(0)]).unwrap();
        let (_, grads) = t.nf_loss_and_grads(&batch, &mut seeded(77), true).unwrap();
        for (name, g) in &grads {
            let base = t.clone();
            let fd = finite_difference_gradient(
                |p| {
                    let mut probe = base.clone();
                    *probe.params_mut().get_mut(name).unwrap() = p.clone();
                    probe.nf_loss(&batch, &mut seeded(77))
                },
                t.params().get(name).unwrap(),
                1e-5,
            )
            .unwrap();
            for (a, b) in g.data().iter().zip(fd.data()) {
                let rel = (a - b).abs() / a.abs().max(1.0);
                assert!(rel < 1e-4, "{name}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_steps_leave_teacher_unchanged() {
        let mut t = small(2, 0.05);
        let before = t.clone();
        let spec = DatasetSpec::gauss_mix_circle(2, 2, 2.0, 0.1).unwrap();
        let h = t.train(&spec, 0, 8, AdamConfig::default(), &mut seeded(0)).unwrap();
        assert!(h.is_empty());
        assert_eq!(t, before);
    }

    #[test]
    fn training_is_deterministic() {
        let spec = DatasetSpec::gauss_mix_circle(2, 2, 2.0, 0.1).unwrap();
        let run = || {
            let mut t = small(2, 0.05);
            t.train(&spec, 20, 16, AdamConfig::default(), &mut seeded(3)).unwrap();
            t
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn encode_requires_sigma() {
        let t = small(2, 0.0);
        let x = points(2, 1);
        assert!(matches!(
            t.encode_coupling(&x, &[Label::Null; 2], &mut seeded(0)),
            Err(Error::Missing(_))
        ));
    }

    #[test]
    fn encode_identity_is_input() {
        let mut t = small(2, 0.0);
        t.set_sigma_f(vec![1.0, 1.0]).unwrap();
        let x = points(4, 9);
        assert_eq!(t.encode_coupling(&x, &[Label::Class(0); 4], &mut seeded(0)).unwrap(), x);
    }

    #[test]
    fn encode_draws_fresh_noise() {
        let mut t = small(2, 0.1);
        t.set_sigma_f(vec![1.0, 1.0]).unwrap();
        let x = points(1, 9);
        let mut rng = seeded(0);
        let a = t.encode_coupling(&x, &[Label::Class(0)], &mut rng).unwrap();
        let b = t.encode_coupling(&x, &[Label::Class(0)], &mut rng).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn sigma_f_of_scaled_identity() {
        let mut t = small(2, 0.0);
        let spec = DatasetSpec::gauss_mix(vec![vec![0.0, 0.0]], vec![vec![9.0, 0.0, 0.0, 9.0]]).unwrap();
        let s = t.estimate_sigma_f(&spec, 20_000, &mut seeded(4)).unwrap();
        for v in s {
            assert!((v - 3.0).abs() < 0.15, "{v}");
        }
        assert!(t.estimate_sigma_f(&spec, 10, &mut seeded(4)).is_err());
    }

    #[test]
    fn non_finite_input_rejected() {
        let t = small(2, 0.0);
        let x = Tensor::from_parts(vec![1, 2], vec![f64::NAN, 0.0]);
        assert!(t.nf_forward(&x, &[Label::Null]).is_err());
        assert!(t.nf_inverse(&x, &[Label::Null]).is_err());
        assert!(t.nf_forward(&points(1, 0), &[Label::Class(5)]).is_err());
    }
}
