//! Synthetic class-conditional distributions.
//!
//! Gaussian mixtures (isotropic or anisotropic) carry an exact log-density;
//! moons and checkerboard do not. Every sample is divided by the dataset's
//! `scale` before it is returned, and [`true_log_density`] accounts for it.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use crate::numerics::rng::{below, normal, uniform, Rng};
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Class label; `Null` is the dropped (unconditional) label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Class(usize),
    Null,
}

impl Label {
    /// Row in a `(k + 1)`-row embedding table; the null label maps to row `k`.
    pub fn embedding_row(self, k: usize) -> usize {
        match self {
            Label::Class(c) => c,
            Label::Null => k,
        }
    }

    pub fn is_valid(self, k: usize) -> bool {
        match self {
            Label::Class(c) => c < k,
            Label::Null => true,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Class(c) => write!(f, "{c}"),
            Label::Null => f.write_str("null"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "null" | "none" | "∅" => Ok(Label::Null),
            other => other
                .parse::<usize>()
                .map(Label::Class)
                .map_err(|_| Error::invalid(format!("bad label {other:?}"))),
        }
    }
}

/// Samples with labels: `x` is `[batch, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub x: Tensor,
    pub c: Vec<Label>,
}

impl LabeledBatch {
    pub fn new(x: Tensor, c: Vec<Label>) -> Result<Self> {
        x.dims2("labeled batch")?;
        if x.rows() != c.len() {
            return Err(Error::Shape {
                op: "labeled batch",
                left: x.shape().to_vec(),
                right: vec![c.len()],
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("labeled batch".into()));
        }
        Ok(LabeledBatch { x, c })
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn select(&self, idx: &[usize]) -> LabeledBatch {
        LabeledBatch {
            x: self.x.select_rows(idx),
            c: idx.iter().map(|&i| self.c[i]).collect(),
        }
    }

    /// CSV with header `x0,...,x{n-1},label`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.dim();
        let header: Vec<String> = (0..n).map(|j| format!("x{j}")).chain(["label".to_string()]).collect();
        writeln!(w, "{}", header.join(","))?;
        for (i, c) in self.c.iter().enumerate() {
            for v in self.x.row(i) {
                write!(w, "{v},")?;
            }
            writeln!(w, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetName {
    GaussMix,
    Moons,
    Checkerboard,
    AnisoGauss,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::GaussMix => "gauss_mix",
            DatasetName::Moons => "moons",
            DatasetName::Checkerboard => "checkerboard",
            DatasetName::AnisoGauss => "aniso_gauss",
        }
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss_mix" => Ok(DatasetName::GaussMix),
            "moons" => Ok(DatasetName::Moons),
            "checkerboard" => Ok(DatasetName::Checkerboard),
            "aniso_gauss" => Ok(DatasetName::AnisoGauss),
            other => Err(Error::invalid(format!("unknown dataset {other:?}"))),
        }
    }
}

/// Gaussian component stored through its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: Vec<f64>,
    chol: Vec<f64>,
    log_det: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: &[f64]) -> Result<Self> {
        let n = mean.len();
        if cov.len() != n * n {
            return Err(Error::Shape {
                op: "gaussian covariance",
                left: vec![n, n],
                right: vec![cov.len()],
            });
        }
        let chol = cholesky(cov, n).ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
        let log_det = 2.0 * (0..n).map(|i| chol[i * n + i].ln()).sum::<f64>();
        Ok(Gaussian { mean, chol, log_det })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        let n = self.mean.len();
        let eps: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
        for i in 0..n {
            let lx: f64 = (0..=i).map(|j| self.chol[i * n + j] * eps[j]).sum();
            out[i] = self.mean[i] + lx;
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let n = self.mean.len();
        // Solve L y = x - mu.
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.chol[i * n + j] * y[j]).sum();
            y[i] = (x[i] - self.mean[i] - s) / self.chol[i * n + i];
        }
        let maha: f64 = y.iter().map(|v| v * v).sum();
        -0.5 * (maha + self.log_det + n as f64 * (2.0 * PI).ln())
    }
}

fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i * n + p] * l[j * n + p]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetParams {
    /// Equal-weight mixture; component `i` is class `i`.
    Mixture(Vec<Gaussian>),
    /// Two interleaved half circles in the first two coordinates.
    Moons { noise: f64 },
    /// Uniform square of `tiles × tiles` cells labeled by parity.
    Checkerboard { extent: f64, tiles: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub n: usize,
    pub k: usize,
    /// Samples are divided by this constant.
    pub scale: f64,
    pub params: DatasetParams,
}

fn circle_point(n: usize, radius: f64, angle: f64) -> Vec<f64> {
    let mut m = vec![0.0; n];
    m[0] = radius * angle.cos();
    m[1] = radius * angle.sin();
    m
}

impl DatasetSpec {
    /// Default experiment: 8 components on a radius-4 circle with covariance 0.09·I.
    pub fn default_experiment() -> Self {
        Self::gauss_mix_circle(2, 8, 4.0, 0.09).expect("valid default")
    }

    /// Single standard normal component, `k = 1`.
    pub fn standard_normal(n: usize) -> Result<Self> {
        Self::gauss_mix(vec![vec![0.0; n]], vec![identity_cov(n, 1.0)])
    }

    /// `k` isotropic components evenly spaced on a circle in the first two coordinates.
    pub fn gauss_mix_circle(n: usize, k: usize, radius: f64, variance: f64) -> Result<Self> {
        check_dims(n, k)?;
        let means = (0..k)
            .map(|i| circle_point(n, if k == 1 { 0.0 } else { radius }, 2.0 * PI * i as f64 / k as f64))
            .collect();
        Self::gauss_mix(means, vec![identity_cov(n, variance); k])
    }

    pub fn gauss_mix(means: Vec<Vec<f64>>, covs: Vec<Vec<f64>>) -> Result<Self> {
        Self::mixture(DatasetName::GaussMix, means, covs)
    }

    /// `k` components on a circle, each stretched along the tangent direction.
    pub fn aniso_gauss(n: usize, k: usize, radius: f64, major: f64, minor: f64) -> Result<Self> {
        check_dims(n, k)?;
        let mut means = Vec::new();
        let mut covs = Vec::new();
        for i in 0..k {
            let a = 2.0 * PI * i as f64 / k as f64;
            means.push(circle_point(n, radius, a));
            let (t0, t1) = (-a.sin(), a.cos());
            let (r0, r1) = (a.cos(), a.sin());
            let mut cov = identity_cov(n, minor);
            cov[0] = major * t0 * t0 + minor * r0 * r0;
            cov[1] = major * t0 * t1 + minor * r0 * r1;
            cov[n] = cov[1];
            cov[n + 1] = major * t1 * t1 + minor * r1 * r1;
            covs.push(cov);
        }
        Self::mixture(DatasetName::AnisoGauss, means, covs)
    }

    fn mixture(name: DatasetName, means: Vec<Vec<f64>>, covs: Vec<Vec<f64>>) -> Result<Self> {
        let k = means.len();
        let n = means.first().map_or(0, Vec::len);
        check_dims(n, k)?;
        if covs.len() != k || means.iter().any(|m| m.len() != n) {
            return Err(Error::invalid("mixture means/covariances disagree"));
        }
        let components = means
            .into_iter()
            .zip(covs)
            .map(|(m, c)| Gaussian::new(m, &c))
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetSpec {
            name,
            n,
            k,
            scale: 1.0,
            params: DatasetParams::Mixture(components),
        })
    }

    pub fn moons(n: usize, noise: f64) -> Result<Self> {
        check_dims(n, 2)?;
        if !(noise >= 0.0) {
            return Err(Error::invalid("moon noise must be nonnegative"));
        }
        Ok(DatasetSpec {
            name: DatasetName::Moons,
            n,
            k: 2,
            scale: 1.0,
            params: DatasetParams::Moons { noise },
        })
    }

    pub fn checkerboard(n: usize, extent: f64, tiles: usize) -> Result<Self> {
        check_dims(n, 2)?;
        if !(extent > 0.0) || tiles == 0 {
            return Err(Error::invalid("checkerboard needs positive extent and tiles"));
        }
        Ok(DatasetSpec {
            name: DatasetName::Checkerboard,
            n,
            k: 2,
            scale: 1.0,
            params: DatasetParams::Checkerboard { extent, tiles },
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("scale must be positive"));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn has_density(&self) -> bool {
        matches!(self.params, DatasetParams::Mixture(_))
    }

    /// Half-width of a box (in returned, scaled units) that holds nearly all mass.
    pub fn extent(&self) -> f64 {
        let raw = match &self.params {
            DatasetParams::Mixture(cs) => cs
                .iter()
                .map(|g| {
                    let n = g.mean.len();
                    let sd = (0..2.min(n)).map(|i| {
                        let row = &g.chol[i * n..i * n + i + 1];
                        row.iter().map(|v| v * v).sum::<f64>().sqrt()
                    });
                    let spread = sd.fold(0.0, f64::max);
                    g.mean.iter().take(2).map(|m| m.abs()).fold(0.0, f64::max) + 5.0 * spread
                })
                .fold(0.0, f64::max),
            DatasetParams::Moons { noise } => 2.0 + 4.0 * noise,
            DatasetParams::Checkerboard { extent, .. } => *extent,
        };
        raw / self.scale
    }

    fn sample_one(&self, class: usize, rng: &mut Rng, out: &mut [f64]) {
        match &self.params {
            DatasetParams::Mixture(cs) => cs[class].sample_into(rng, out),
            DatasetParams::Moons { noise } => {
                let th = PI * uniform(rng);
                let (a, b) = if class == 0 {
                    (th.cos(), th.sin())
                } else {
                    (1.0 - th.cos(), 0.5 - th.sin())
                };
                out[0] = a - 0.5 + noise * normal(rng);
                out[1] = b - 0.25 + noise * normal(rng);
                for v in out.iter_mut().skip(2) {
                    *v = noise * normal(rng);
                }
            }
            DatasetParams::Checkerboard { extent, tiles } => {
                let cell = 2.0 * extent / *tiles as f64;
                // Draw a tile of the requested parity, then a point inside it.
                loop {
                    let (ix, iy) = (below(rng, *tiles), below(rng, *tiles));
                    if (ix + iy) % 2 == class {
                        out[0] = -extent + cell * (ix as f64 + uniform(rng));
                        out[1] = -extent + cell * (iy as f64 + uniform(rng));
                        break;
                    }
                }
                for v in out.iter_mut().skip(2) {
                    *v = 0.1 * normal(rng);
                }
            }
        }
        for v in out.iter_mut() {
            *v /= self.scale;
        }
    }
}

fn check_dims(n: usize, k: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("dimension must be at least 2, got {n}")));
    }
    if k < 1 {
        return Err(Error::invalid("need at least one class"));
    }
    Ok(())
}

fn identity_cov(n: usize, v: f64) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        c[i * n + i] = v;
    }
    c
}

/// I.i.d. draws; labels are the component/cluster identity.
pub fn sample_dataset(spec: &DatasetSpec, count: usize, rng: &mut Rng) -> Result<LabeledBatch> {
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let n = spec.n;
    let mut data = vec![0.0; count * n];
    let mut labels = Vec::with_capacity(count);
    for (i, row) in data.chunks_mut(n).enumerate() {
        let class = match spec.name {
            // Moons alternate classes by construction.
            DatasetName::Moons => i % 2,
            _ => below(rng, spec.k),
        };
        spec.sample_one(class, rng, row);
        labels.push(Label::Class(class));
    }
    LabeledBatch::new(Tensor::from_parts(vec![count, n], data), labels)
}

/// Draws from a single class.
pub fn sample_class(spec: &DatasetSpec, class: usize, count: usize, rng: &mut Rng) -> Result<LabeledBatch> {
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if class >= spec.k {
        return Err(Error::invalid(format!("class {class} out of {}", spec.k)));
    }
    let n = spec.n;
    let mut data = vec![0.0; count * n];
    for row in data.chunks_mut(n) {
        spec.sample_one(class, rng, row);
    }
    LabeledBatch::new(Tensor::from_parts(vec![count, n], data), vec![Label::Class(class); count])
}

/// Exact log-density of a (scaled) sample, or `None` when no closed form exists.
pub fn true_log_density(spec: &DatasetSpec, x: &[f64]) -> Option<f64> {
    let DatasetParams::Mixture(cs) = &spec.params else {
        return None;
    };
    let raw: Vec<f64> = x.iter().map(|v| v * spec.scale).collect();
    let logs: Vec<f64> = cs.iter().map(|g| g.log_density(&raw)).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    Some(lse - (cs.len() as f64).ln() + spec.n as f64 * spec.scale.ln())
}

/// Class-conditional log-density, or `None` when unavailable.
pub fn class_log_density(spec: &DatasetSpec, class: usize, x: &[f64]) -> Option<f64> {
    let DatasetParams::Mixture(cs) = &spec.params else {
        return None;
    };
    let raw: Vec<f64> = x.iter().map(|v| v * spec.scale).collect();
    cs.get(class)
        .map(|g| g.log_density(&raw) + spec.n as f64 * spec.scale.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::seeded;

    #[test]
    fn standard_normal_mean() {
        let spec = DatasetSpec::standard_normal(2).unwrap();
        let b = sample_dataset(&spec, 100_000, &mut seeded(1)).unwrap();
        for j in 0..2 {
            let mean: f64 = (0..b.len()).map(|i| b.x.row(i)[j]).sum::<f64>() / b.len() as f64;
            assert!(mean.abs() < 0.02, "{mean}");
        }
        assert!(b.c.iter().all(|&c| c == Label::Class(0)));
    }

    #[test]
    fn moons_balanced() {
        let spec = DatasetSpec::moons(2, 0.05).unwrap();
        let b = sample_dataset(&spec, 10_000, &mut seeded(2)).unwrap();
        let ones = b.c.iter().filter(|&&c| c == Label::Class(1)).count() as f64;
        assert!((ones / 10_000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn zero_count_rejected() {
        let spec = DatasetSpec::default_experiment();
        assert!(sample_dataset(&spec, 0, &mut seeded(0)).is_err());
    }

    #[test]
    fn unknown_name_rejected() {
        assert!("spiral".parse::<DatasetName>().is_err());
        assert_eq!("moons".parse::<DatasetName>().unwrap(), DatasetName::Moons);
    }

    #[test]
    fn standard_normal_density_at_origin() {
        let spec = DatasetSpec::standard_normal(2).unwrap();
        let lp = true_log_density(&spec, &[0.0, 0.0]).unwrap();
        assert!((lp + (2.0 * PI).ln()).abs() < 1e-12);
        assert!((lp + 1.8379).abs() < 1e-4);
    }

    #[test]
    fn symmetric_mixture_midpoint() {
        let spec =
            DatasetSpec::gauss_mix(vec![vec![-1.0, 0.0], vec![1.0, 0.0]], vec![identity_cov(2, 1.0); 2]).unwrap();
        // Both components are at squared distance 1 from the origin, so the
        // mixture density equals each component density.
        let expected = -0.5 * 1.0 - (2.0 * PI).ln();
        let lp = true_log_density(&spec, &[0.0, 0.0]).unwrap();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn checkerboard_unavailable() {
        let spec = DatasetSpec::checkerboard(2, 2.0, 4).unwrap();
        assert_eq!(true_log_density(&spec, &[0.0, 0.0]), None);
        assert_eq!(true_log_density(&DatasetSpec::moons(2, 0.1).unwrap(), &[0.0, 0.0]), None);
    }

    #[test]
    fn checkerboard_labels_are_tile_parity() {
        let spec = DatasetSpec::checkerboard(2, 2.0, 4).unwrap();
        let b = sample_dataset(&spec, 500, &mut seeded(3)).unwrap();
        for i in 0..b.len() {
            let r = b.x.row(i);
            let ix = ((r[0] + 2.0) / 1.0).floor() as usize;
            let iy = ((r[1] + 2.0) / 1.0).floor() as usize;
            assert_eq!(b.c[i], Label::Class((ix + iy) % 2));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = DatasetSpec::default_experiment();
        let a = sample_dataset(&spec, 64, &mut seeded(9)).unwrap();
        let b = sample_dataset(&spec, 64, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        assert!(DatasetSpec::gauss_mix(vec![vec![0.0, 0.0]], vec![vec![1.0, 2.0, 2.0, 1.0]]).is_err());
        assert!(DatasetSpec::gauss_mix_circle(1, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn scaling_shifts_log_density() {
        let base = DatasetSpec::standard_normal(2).unwrap();
        let scaled = base.clone().with_scale(2.0).unwrap();
        // x_scaled = x_raw / 2, so p_scaled(y) = 4 p_raw(2y).
        let lp = true_log_density(&scaled, &[0.5, 0.0]).unwrap();
        let expected = true_log_density(&base, &[1.0, 0.0]).unwrap() + 2.0 * 2f64.ln();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn csv_header() {
        let spec = DatasetSpec::default_experiment();
        let b = sample_dataset(&spec, 3, &mut seeded(0)).unwrap();
        let mut out = Vec::new();
        b.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("x0,x1,label\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
