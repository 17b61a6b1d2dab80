//! Noise/data couplings.
//!
//! Every mode turns a data batch into paired rows `(x_i, endpoint_i, c_i)`.
//! The flow-matching loss never looks at which mode produced them.

mod hungarian;
mod semi_discrete;

use std::sync::Arc;

pub use hungarian::{assignment_cost, hungarian, MAX_ASSIGNMENT};
pub use semi_discrete::{sd_potential_update, SemiDiscrete};

use crate::datasets::{Label, LabeledBatch};
use crate::nf_teacher::FlowTeacher;
use crate::numerics::rng::{normal_matrix, Rng};
use crate::numerics::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub enum CouplingMode {
    /// Fresh Gaussian noise paired arbitrarily.
    Independent,
    /// Gaussian noise re-paired by an exact within-batch assignment.
    MinibatchOt { label_cost: f64 },
    /// Gaussian noise looked up against a fixed support through dual potentials.
    SemiDiscreteOt(SemiDiscrete),
    /// The teacher's normalized encoding of the noised data point.
    NfTeacher(Arc<FlowTeacher>),
}

impl CouplingMode {
    pub fn name(&self) -> &'static str {
        match self {
            CouplingMode::Independent => "fm",
            CouplingMode::MinibatchOt { .. } => "ot",
            CouplingMode::SemiDiscreteOt(_) => "sdot",
            CouplingMode::NfTeacher(_) => "nfm",
        }
    }
}

/// Row-paired training endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub x: Tensor,
    pub endpoint: Tensor,
    pub c: Vec<Label>,
}

impl PairBatch {
    pub fn new(x: Tensor, endpoint: Tensor, c: Vec<Label>) -> Result<Self> {
        if x.shape() != endpoint.shape() {
            return Err(Error::Shape {
                op: "pair batch",
                left: x.shape().to_vec(),
                right: endpoint.shape().to_vec(),
            });
        }
        if x.rows() != c.len() {
            return Err(Error::invalid("pair batch label count"));
        }
        Ok(PairBatch { x, endpoint, c })
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Mean of `‖endpoint_i − x_i‖²`.
    pub fn mean_sq_cost(&self) -> f64 {
        let total: f64 = (0..self.len())
            .map(|i| sq_dist(self.x.row(i), self.endpoint.row(i)))
            .sum();
        total / self.len() as f64
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cost `‖ε_j − x_i‖² + label_cost·[c_i ≠ slot_j]`.
pub fn ot_cost_matrix(x: &Tensor, noise: &Tensor, c: &[Label], slots: &[Label], label_cost: f64) -> Tensor {
    let b = x.rows();
    let mut data = Vec::with_capacity(b * b);
    for i in 0..b {
        for j in 0..b {
            let penalty = if c[i] != slots[j] { label_cost } else { 0.0 };
            data.push(sq_dist(x.row(i), noise.row(j)) + penalty);
        }
    }
    Tensor::new(vec![b, b], data).expect("finite cost")
}

/// Re-pairs pre-drawn noise rows with data rows by exact assignment.
///
/// Noise slot `j` carries the label of data row `j`, so with a large
/// `label_cost` the assignment only moves noise within a class.
pub fn minibatch_ot_pairs(data: &LabeledBatch, noise: &Tensor, label_cost: f64) -> Result<PairBatch> {
    if !(label_cost >= 0.0 && label_cost.is_finite()) {
        return Err(Error::invalid("label cost must be nonnegative"));
    }
    if noise.shape() != data.x.shape() {
        return Err(Error::Shape {
            op: "minibatch ot",
            left: data.x.shape().to_vec(),
            right: noise.shape().to_vec(),
        });
    }
    let cost = ot_cost_matrix(&data.x, noise, &data.c, &data.c, label_cost);
    let perm = hungarian(&cost)?;
    let endpoint = noise.select_rows(&perm);
    PairBatch::new(data.x.clone(), endpoint, data.c.clone())
}

/// Draws one batch of training pairs under `mode`.
pub fn draw_pairs(mode: &CouplingMode, data: &LabeledBatch, rng: &mut Rng) -> Result<PairBatch> {
    if data.is_empty() {
        return Err(Error::invalid("empty data batch"));
    }
    let (b, n) = (data.len(), data.dim());
    match mode {
        CouplingMode::Independent => {
            let noise = normal_matrix(rng, b, n);
            PairBatch::new(data.x.clone(), noise, data.c.clone())
        }
        CouplingMode::MinibatchOt { label_cost } => {
            let noise = normal_matrix(rng, b, n);
            minibatch_ot_pairs(data, &noise, *label_cost)
        }
        CouplingMode::SemiDiscreteOt(sd) => sd.draw(b, rng),
        CouplingMode::NfTeacher(teacher) => {
            if teacher.sigma_f().is_none() {
                return Err(Error::Missing("teacher sigma_f is unset".into()));
            }
            let endpoint = teacher.encode_coupling(&data.x, &data.c, rng)?;
            PairBatch::new(data.x.clone(), endpoint, data.c.clone())
        }
    }
}

/// Proxy for Var(v_t | x_t, t): for each pair, half the squared difference
/// between its velocity target and that of the nearest other same-class
/// interpolant at time `t`, averaged over the batch.
pub fn velocity_variance_proxy(pairs: &PairBatch, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("t = {t} outside [0, 1]")));
    }
    let b = pairs.len();
    if b < 2 {
        return Err(Error::invalid("velocity variance needs at least two pairs"));
    }
    let xt: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            pairs
                .x
                .row(i)
                .iter()
                .zip(pairs.endpoint.row(i))
                .map(|(x, e)| (1.0 - t) * x + t * e)
                .collect()
        })
        .collect();
    let vel: Vec<Vec<f64>> = (0..b)
        .map(|i| pairs.endpoint.row(i).iter().zip(pairs.x.row(i)).map(|(e, x)| e - x).collect())
        .collect();
    let mut total = 0.0;
    let mut counted = 0usize;
    for i in 0..b {
        let nearest = (0..b)
            .filter(|&j| j != i && pairs.c[j] == pairs.c[i])
            .map(|j| (sq_dist(&xt[i], &xt[j]), j))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, j)) = nearest {
            total += 0.5 * sq_dist(&vel[i], &vel[j]);
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::invalid("no same-class neighbours"));
    }
    Ok(total / counted as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::seeded;

    fn line(points: &[f64], labels: &[usize]) -> LabeledBatch {
        LabeledBatch::new(
            Tensor::new(vec![points.len(), 1], points.to_vec()).unwrap(),
            labels.iter().map(|&c| Label::Class(c)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ot_pairs_nearest_without_label_cost() {
        let data = line(&[0.0, 10.0], &[0, 1]);
        let noise = Tensor::new(vec![2, 1], vec![9.0, 1.0]).unwrap();
        let pairs = minibatch_ot_pairs(&data, &noise, 0.0).unwrap();
        assert_eq!(pairs.endpoint.data(), &[1.0, 9.0]);
    }

    #[test]
    fn ot_label_cost_forces_cross_pairing() {
        let data = line(&[0.0, 10.0], &[0, 1]);
        let noise = Tensor::new(vec![2, 1], vec![9.0, 1.0]).unwrap();
        let pairs = minibatch_ot_pairs(&data, &noise, 1e6).unwrap();
        assert_eq!(pairs.endpoint.data(), &[9.0, 1.0]);
    }

    #[test]
    fn independent_covariance() {
        let data = line(&[0.0; 4], &[0; 4]);
        let data = LabeledBatch::new(Tensor::zeros(&[4, 2]), data.c).unwrap();
        let mut rng = seeded(1);
        let mut s = [0.0; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let p = draw_pairs(&CouplingMode::Independent, &data, &mut rng).unwrap();
            for r in 0..4 {
                let e = p.endpoint.row(r);
                s[0] += e[0] * e[0];
                s[1] += e[0] * e[1];
                s[3] += e[1] * e[1];
            }
        }
        let m = (draws * 4) as f64;
        assert!((s[0] / m - 1.0).abs() < 0.03);
        assert!((s[3] / m - 1.0).abs() < 0.03);
        assert!((s[1] / m).abs() < 0.03);
    }

    #[test]
    fn ot_never_costs_more_than_independent() {
        let mut rng = seeded(4);
        let data = LabeledBatch::new(normal_matrix(&mut rng, 32, 2), vec![Label::Class(0); 32]).unwrap();
        let noise = normal_matrix(&mut rng, 32, 2);
        let ind = PairBatch::new(data.x.clone(), noise.clone(), data.c.clone()).unwrap();
        let ot = minibatch_ot_pairs(&data, &noise, 0.0).unwrap();
        assert!(ot.mean_sq_cost() <= ind.mean_sq_cost());
    }

    #[test]
    fn teacher_mode_needs_sigma() {
        let t = FlowTeacher::new(Default::default(), &mut seeded(0)).unwrap();
        let mode = CouplingMode::NfTeacher(Arc::new(t));
        let data = LabeledBatch::new(Tensor::zeros(&[2, 2]), vec![Label::Class(0); 2]).unwrap();
        assert!(matches!(draw_pairs(&mode, &data, &mut seeded(0)), Err(Error::Missing(_))));
    }
}
