use super::tensor::Tensor;
use crate::{Error, Result};

/// Central finite-difference gradient of a scalar function.
///
/// Each coordinate is perturbed by `±h`; `f` must be finite at every probe.
pub fn finite_difference_gradient<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec(data: &[f64]) -> Tensor {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn half_squared_norm() {
        let g = finite_difference_gradient(|x| Ok(0.5 * x.data().iter().map(|v| v * v).sum::<f64>()), &vec(&[3.0, -1.0]), 1e-5)
            .unwrap();
        assert!((g.data()[0] - 3.0).abs() < 1e-8);
        assert!((g.data()[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn product() {
        let g = finite_difference_gradient(|x| Ok(x.data()[0] * x.data()[1]), &vec(&[2.0, 5.0]), 1e-5).unwrap();
        assert!((g.data()[0] - 5.0).abs() < 1e-8);
        assert!((g.data()[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn constant_is_flat() {
        let g = finite_difference_gradient(|_| Ok(4.2), &vec(&[1.0, 2.0, 3.0]), 1e-5).unwrap();
        assert!(g.data().iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn rejects_bad_step_and_nan() {
        assert!(finite_difference_gradient(|_| Ok(0.0), &vec(&[1.0]), 0.0).is_err());
        assert!(matches!(
            finite_difference_gradient(|_| Ok(f64::NAN), &vec(&[1.0]), 1e-5),
            Err(Error::NonFinite(_))
        ));
    }
}
