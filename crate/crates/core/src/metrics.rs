//! Distances, curvature, sample quality and the guidance search.

use crate::couplings::{assignment_cost, hungarian, MAX_ASSIGNMENT};
use crate::datasets::{sample_dataset, DatasetSpec, LabeledBatch};
use crate::nf_teacher::FlowTeacher;
use crate::numerics::rng::{normal_matrix, Rng};
use crate::numerics::{Tape, Tensor};
use crate::sampling::{sample_set, SolverConfig, Trajectory, VelocityField};
use crate::{Error, Result};

/// Inverse golden ratio, `(√5 − 1)/2`.
pub const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// `‖a − b‖ / √(2n)`: about 1 for independent standard-normal points.
pub fn pair_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape {
            op: "pair_distance",
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sq / (2 * a.len()) as f64).sqrt())
}

/// Input- and latent-space distances under the three pairing regimes:
/// `0`: different points and noise, `1`: same point, different noise,
/// `2`: different points, shared noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZTableRow {
    pub eta: f64,
    pub dx: [f64; 3],
    pub dz: [f64; 3],
}

/// Monte-Carlo distances for one teacher, aggregated as root-mean-square.
pub fn z_table_row(teacher: &FlowTeacher, spec: &DatasetSpec, pairs: usize, rng: &mut Rng) -> Result<ZTableRow> {
    if teacher.trained_steps() == 0 {
        return Err(Error::invalid("z table needs a trained teacher"));
    }
    if pairs == 0 {
        return Err(Error::invalid("z table needs at least one pair"));
    }
    let n = spec.n;
    let eta = teacher.eta();
    let a = sample_dataset(spec, pairs, rng)?;
    let b = sample_dataset(spec, pairs, rng)?;
    let e1 = normal_matrix(rng, pairs, n);
    let e2 = normal_matrix(rng, pairs, n);
    let noisy = |x: &Tensor, e: &Tensor| x.zip_map(e, "z table", |p, q| p + eta * q);

    // (first x, first noise, second x, second noise) per regime.
    let regimes: [(&LabeledBatch, &Tensor, &LabeledBatch, &Tensor); 3] =
        [(&a, &e1, &b, &e2), (&a, &e1, &a, &e2), (&a, &e1, &b, &e1)];
    let mut row = ZTableRow {
        eta,
        dx: [0.0; 3],
        dz: [0.0; 3],
    };
    for (r, (xa, ea, xb, eb)) in regimes.into_iter().enumerate() {
        let pa = noisy(&xa.x, ea)?;
        let pb = noisy(&xb.x, eb)?;
        let za = teacher.nf_forward(&pa, &xa.c)?.0;
        let zb = teacher.nf_forward(&pb, &xb.c)?.0;
        let (mut sx, mut sz) = (0.0, 0.0);
        for i in 0..pairs {
            sx += pair_distance(pa.row(i), pb.row(i))?.powi(2);
            sz += pair_distance(za.row(i), zb.row(i))?.powi(2);
        }
        row.dx[r] = (sx / pairs as f64).sqrt();
        row.dz[r] = (sz / pairs as f64).sqrt();
    }
    Ok(row)
}

pub fn z_table(teachers: &[&FlowTeacher], spec: &DatasetSpec, pairs: usize, rng: &mut Rng) -> Result<Vec<ZTableRow>> {
    teachers.iter().map(|t| z_table_row(t, spec, pairs, rng)).collect()
}

/// Mean over trajectories and segments of `‖x_1 − x_m − v⁽ⁱ⁾‖² / n`.
pub fn curvature(trajectories: &[Trajectory]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for tr in trajectories {
        let chord: Vec<f64> = tr.initial().iter().zip(tr.terminal()).map(|(a, b)| a - b).collect();
        let n = chord.len() as f64;
        for v in &tr.velocities {
            let sq: f64 = chord.iter().zip(v).map(|(c, u)| (c - u) * (c - u)).sum();
            total += sq / n;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("curvature needs at least one recorded segment"));
    }
    Ok(total / count as f64)
}

/// Exact 2-Wasserstein distance between two equal-size empirical sets.
pub fn wasserstein2(samples: &Tensor, reference: &Tensor) -> Result<f64> {
    if samples.shape() != reference.shape() {
        return Err(Error::Shape {
            op: "wasserstein2",
            left: samples.shape().to_vec(),
            right: reference.shape().to_vec(),
        });
    }
    let m = samples.rows();
    if m == 0 || m > MAX_ASSIGNMENT {
        return Err(Error::invalid(format!("wasserstein2 needs 1..={MAX_ASSIGNMENT} points, got {m}")));
    }
    let mut cost = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let s: f64 = samples
                .row(i)
                .iter()
                .zip(reference.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            cost.push(s);
        }
    }
    let cost = Tensor::new(vec![m, m], cost)?;
    let perm = hungarian(&cost)?;
    Ok((assignment_cost(&cost, &perm) / m as f64).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenResult {
    /// Midpoint of the final bracket.
    pub x: f64,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl GoldenResult {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Golden-section bracketing of a unimodal objective on `[lo, hi]`.
pub fn golden_section_search<F>(mut f: F, lo: f64, hi: f64, iterations: usize) -> Result<GoldenResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("golden section needs lo < hi, got [{lo}, {hi}]")));
    }
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("objective at {x}")))
        }
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    for _ in 0..iterations {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok(GoldenResult {
        x,
        value: eval(x)?,
        lo: a,
        hi: b,
    })
}

/// Rounds to two significant digits.
pub fn round_sig2(w: f64) -> f64 {
    if w == 0.0 || !w.is_finite() {
        return w;
    }
    format!("{w:.1e}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceChoice {
    pub w: f64,
    /// Quick objective at `w`.
    pub w2: f64,
    /// Quick objective without guidance.
    pub w2_unguided: f64,
}

/// Searches guidance on `[0, w_max]` against a quick W2 on `quick_count`
/// samples; the rounded optimum is kept only if it beats `w = 0`.
pub fn guidance_search<V: VelocityField + ?Sized>(
    field: &V,
    template: &SolverConfig,
    reference: &Tensor,
    quick_count: usize,
    w_max: f64,
    iterations: usize,
    seed: u64,
) -> Result<GuidanceChoice> {
    if quick_count == 0 || quick_count > MAX_ASSIGNMENT || reference.rows() != quick_count {
        return Err(Error::invalid(format!(
            "quick count must be in 1..={MAX_ASSIGNMENT} and match the reference ({} rows)",
            reference.rows()
        )));
    }
    if !(w_max >= 0.0) {
        return Err(Error::invalid("w_max must be ≥ 0"));
    }
    let objective = |w: f64| -> Result<f64> {
        let set = sample_set(field, &template.with_guidance(w), quick_count, seed, false)?;
        if set.failed > 0 {
            return Err(Error::NonFinite(format!("{} diverged trajectories at w = {w}", set.failed)));
        }
        wasserstein2(&set.samples.x, reference)
    };
    let base = objective(0.0)?;
    if w_max == 0.0 {
        return Ok(GuidanceChoice {
            w: 0.0,
            w2: base,
            w2_unguided: base,
        });
    }
    let found = golden_section_search(objective, 0.0, w_max, iterations)?;
    let w = round_sig2(found.x);
    let at_w = if w == found.x { found.value } else { objective(w)? };
    Ok(if at_w < base {
        GuidanceChoice {
            w,
            w2: at_w,
            w2_unguided: base,
        }
    } else {
        GuidanceChoice {
            w: 0.0,
            w2: base,
            w2_unguided: base,
        }
    })
}

/// Per-dimension negative log-likelihood in nats of noised held-out data.
pub fn teacher_nll(teacher: &FlowTeacher, spec: &DatasetSpec, count: usize, rng: &mut Rng) -> Result<f64> {
    if count == 0 {
        return Err(Error::invalid("nll needs at least one sample"));
    }
    let n = teacher.dim();
    let mut total = 0.0;
    let mut remaining = count;
    while remaining > 0 {
        let take = remaining.min(4096);
        let batch = sample_dataset(spec, take, rng)?;
        let noise = normal_matrix(rng, take, n);
        let mut tape = Tape::new();
        let bound = teacher.params().bind_frozen(&mut tape);
        let loss = teacher.loss_on_tape(&mut tape, &bound, &batch.x, &noise, &batch.c)?;
        total += tape.value(loss).item() * take as f64;
        remaining -= take;
    }
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    Ok(total / count as f64 / n as f64 + half_log_2pi)
}

/// One evaluation row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub nfe: usize,
    pub solver: String,
    pub schedule: String,
    pub guidance: f64,
    pub w2: f64,
    pub kappa: f64,
    pub nll: Option<f64>,
}
