//! Semi-discrete optimal transport between N(0, I) and a fixed support.
//!
//! A noise draw `ε` in a slot of class `c` is sent to
//! `argmin_i ½‖ε − x_i‖² − g_i + label_cost·[c ≠ c_i]`. The potentials `g`
//! are fitted by stochastic ascent on the semi-dual objective, whose
//! gradient in `g_i` is `1/N − P(ε is sent to i)`.

use super::{sq_dist, PairBatch};
use crate::datasets::{Label, LabeledBatch};
use crate::numerics::rng::{below, normal_matrix, Rng};
use crate::numerics::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SemiDiscrete {
    support: LabeledBatch,
    potentials: Vec<f64>,
    pub label_cost: f64,
    pub step_size: f64,
    k: usize,
}

fn lookup(support: &LabeledBatch, potentials: &[f64], eps: &[f64], slot: Label, label_cost: f64) -> usize {
    let mut best = 0usize;
    let mut best_val = f64::INFINITY;
    for i in 0..support.len() {
        let penalty = if support.c[i] != slot { label_cost } else { 0.0 };
        let val = 0.5 * sq_dist(eps, support.x.row(i)) - potentials[i] + penalty;
        // Strict comparison keeps the lowest index on ties.
        if val < best_val {
            best_val = val;
            best = i;
        }
    }
    best
}

/// One ascent step on the potentials from a batch of noise rows and their slot labels.
pub fn sd_potential_update(
    potentials: &mut [f64],
    support: &LabeledBatch,
    noise: &Tensor,
    slots: &[Label],
    label_cost: f64,
    step_size: f64,
) -> Result<()> {
    if !(step_size > 0.0) {
        return Err(Error::invalid("step size must be positive"));
    }
    if potentials.len() != support.len() {
        return Err(Error::Shape {
            op: "sd potentials",
            left: vec![potentials.len()],
            right: vec![support.len()],
        });
    }
    if noise.cols() != support.dim() || noise.rows() != slots.len() || noise.rows() == 0 {
        return Err(Error::Shape {
            op: "sd noise batch",
            left: noise.shape().to_vec(),
            right: vec![slots.len(), support.dim()],
        });
    }
    let n_support = support.len() as f64;
    let batch = noise.rows() as f64;
    let mut counts = vec![0usize; support.len()];
    for (r, &slot) in slots.iter().enumerate() {
        counts[lookup(support, potentials, noise.row(r), slot, label_cost)] += 1;
    }
    for (g, &cnt) in potentials.iter_mut().zip(&counts) {
        *g += step_size * (1.0 / n_support - cnt as f64 / batch);
    }
    Ok(())
}

impl SemiDiscrete {
    /// Zero potentials over `support`; `k` is the class count used for slot labels.
    pub fn new(support: LabeledBatch, k: usize, label_cost: f64, step_size: f64) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::invalid("empty semi-discrete support"));
        }
        if !(label_cost >= 0.0) || !(step_size > 0.0) || k == 0 {
            return Err(Error::invalid("semi-discrete needs label_cost ≥ 0, step_size > 0, k ≥ 1"));
        }
        let potentials = vec![0.0; support.len()];
        Ok(SemiDiscrete {
            support,
            potentials,
            label_cost,
            step_size,
            k,
        })
    }

    pub fn with_potentials(mut self, potentials: Vec<f64>) -> Result<Self> {
        if potentials.len() != self.support.len() {
            return Err(Error::Shape {
                op: "sd potentials",
                left: vec![potentials.len()],
                right: vec![self.support.len()],
            });
        }
        self.potentials = potentials;
        Ok(self)
    }

    pub fn support(&self) -> &LabeledBatch {
        &self.support
    }

    pub fn potentials(&self) -> &[f64] {
        &self.potentials
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    fn draw_slots(&self, count: usize, rng: &mut Rng) -> Vec<Label> {
        (0..count).map(|_| Label::Class(below(rng, self.k))).collect()
    }

    /// Support index each noise row is sent to.
    pub fn assign(&self, noise: &Tensor, slots: &[Label]) -> Vec<usize> {
        (0..noise.rows())
            .map(|r| lookup(&self.support, &self.potentials, noise.row(r), slots[r], self.label_cost))
            .collect()
    }

    /// Runs `steps` ascent updates with fresh noise batches.
    pub fn fit(&mut self, steps: usize, batch: usize, rng: &mut Rng) -> Result<()> {
        let n = self.support.dim();
        for _ in 0..steps {
            let noise = normal_matrix(rng, batch, n);
            let slots = self.draw_slots(batch, rng);
            sd_potential_update(
                &mut self.potentials,
                &self.support,
                &noise,
                &slots,
                self.label_cost,
                self.step_size,
            )?;
        }
        Ok(())
    }

    /// Fresh noise rows, each paired with the support point it is sent to.
    pub fn draw(&self, count: usize, rng: &mut Rng) -> Result<PairBatch> {
        let noise = normal_matrix(rng, count, self.support.dim());
        let slots = self.draw_slots(count, rng);
        let idx = self.assign(&noise, &slots);
        let data = self.support.select(&idx);
        PairBatch::new(data.x, noise, data.c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::seeded;

    fn support(points: &[[f64; 2]]) -> LabeledBatch {
        LabeledBatch::new(
            Tensor::from_rows(&points.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap(),
            vec![Label::Class(0); points.len()],
        )
        .unwrap()
    }

    #[test]
    fn single_point_takes_everything() {
        let mut sd = SemiDiscrete::new(support(&[[0.3, -0.2]]), 1, 0.0, 0.1).unwrap();
        sd.fit(10, 64, &mut seeded(1)).unwrap();
        let pairs = sd.draw(100, &mut seeded(2)).unwrap();
        for i in 0..100 {
            assert_eq!(pairs.x.row(i), &[0.3, -0.2]);
        }
    }

    #[test]
    fn symmetric_pair_stays_symmetric() {
        let sup = support(&[[-1.0, 0.0], [1.0, 0.0]]);
        let mut g = vec![0.0, 0.0];
        let mut rng = seeded(3);
        for _ in 0..1000 {
            let half = normal_matrix(&mut rng, 32, 2);
            // Mirror each draw so the batch is exactly symmetric.
            let mut rows = Vec::new();
            for r in 0..32 {
                let e = half.row(r);
                rows.push(vec![e[0], e[1]]);
                rows.push(vec![-e[0], e[1]]);
            }
            let noise = Tensor::from_rows(&rows).unwrap();
            sd_potential_update(&mut g, &sup, &noise, &[Label::Class(0); 64], 0.0, 0.05).unwrap();
        }
        assert!((g[0] - g[1]).abs() < 0.05 * 2.0, "{g:?}");
    }

    #[test]
    fn rejects_bad_step() {
        let sup = support(&[[0.0, 0.0]]);
        let mut g = vec![0.0];
        let noise = Tensor::zeros(&[1, 2]);
        assert!(sd_potential_update(&mut g, &sup, &noise, &[Label::Class(0)], 0.0, 0.0).is_err());
        assert!(sd_potential_update(&mut [0.0, 0.0], &sup, &noise, &[Label::Class(0)], 0.0, 0.1).is_err());
    }

    #[test]
    fn label_cost_keeps_classes_apart() {
        let sup = LabeledBatch::new(
            Tensor::from_rows(&[vec![-3.0, 0.0], vec![3.0, 0.0]]).unwrap(),
            vec![Label::Class(0), Label::Class(1)],
        )
        .unwrap();
        let sd = SemiDiscrete::new(sup, 2, 1e3, 0.1).unwrap();
        let noise = Tensor::from_rows(&[vec![2.9, 0.0], vec![-2.9, 0.0]]).unwrap();
        assert_eq!(sd.assign(&noise, &[Label::Class(0), Label::Class(1)]), vec![0, 1]);
        let free = SemiDiscrete { label_cost: 0.0, ..sd };
        assert_eq!(free.assign(&noise, &[Label::Class(0), Label::Class(1)]), vec![1, 0]);
    }
}
