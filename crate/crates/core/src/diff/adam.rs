use serde::{Deserialize, Serialize};

use super::{ParamStore, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update from the accumulated gradients, which are
/// zeroed afterwards. A non-finite gradient aborts before anything changes.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, cfg: &AdamConfig) -> Result<()> {
    if let Some(name) = store.grads_finite() {
        return Err(Error::NonFinite(format!("gradient of `{name}`")));
    }
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let (inv_bc1, inv_bc2) = (T::of(1.0 / bc1), T::of(1.0 / bc2));
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
    for (value, grad, m, v) in store.adam_parts() {
        let it = value
            .data_mut()
            .iter_mut()
            .zip(grad.data_mut())
            .zip(m.data_mut().iter_mut().zip(v.data_mut()));
        for ((p, g), (m, v)) in it {
            *m = b1 * *m + one_b1 * *g;
            *v = b2 * *v + one_b2 * *g * *g;
            let m_hat = *m * inv_bc1;
            let v_hat = *v * inv_bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            *g = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{Array, ParamGrads};

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("p", Array::from_f64(&[1], &[v]).unwrap()).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(2.0);
        adam_step(&mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.value(0).data(), &[2.0]);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        let mut s = scalar_store(0.0);
        s.accumulate(&ParamGrads(vec![Array::from_f64(&[1], &[1.0]).unwrap()]), 1.0).unwrap();
        adam_step(&mut s, &cfg).unwrap();
        // m̂ = v̂ = 1 after bias correction.
        let expected = -cfg.lr / (1.0 + cfg.eps);
        let got = s.value(0).data()[0];
        assert!((got - expected).abs() <= 1e-6 * cfg.lr);
        assert!((got + cfg.lr).abs() <= 1e-6 * cfg.lr);
        assert_eq!(s.grad(0).data(), &[0.0]);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut s = scalar_store(1.0);
        s.accumulate(&ParamGrads(vec![Array::from_f64(&[1], &[f64::NAN]).unwrap()]), 1.0).unwrap();
        assert!(matches!(adam_step(&mut s, &AdamConfig::default()), Err(Error::NonFinite(_))));
        assert_eq!(s.step(), 0);
        assert_eq!(s.value(0).data(), &[1.0]);
    }
}
