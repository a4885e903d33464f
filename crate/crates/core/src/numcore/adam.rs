use serde::{Deserialize, Serialize};

use super::{NumError, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<(), NumError> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NumError::InvalidConfig(format!("invalid Adam config {self:?}")))
        }
    }
}

/// One Adam update over every entry of `params`, then zeroes the gradients.
///
/// Moments follow the usual exponential recurrences
/// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`, and the step uses the
/// bias-corrected `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`:
/// `θ ← θ − lr·m̂/(√v̂ + ε)`.
///
/// All gradients are checked before anything is touched, so a non-finite
/// gradient leaves the store unchanged.
pub fn adam_step(params: &mut ParamStore, cfg: &AdamConfig) -> Result<(), NumError> {
    cfg.validate()?;
    if let Some((name, _)) = params.iter().find(|(_, p)| !p.grad.is_finite()) {
        return Err(NumError::NonFiniteGradient(name.to_string()));
    }
    let t = params.bump_step() as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (_, p) in params.iter_mut() {
        let value = p.value.data_mut();
        let m = p.m.data_mut();
        let v = p.v.data_mut();
        let g = p.grad.data_mut();
        for i in 0..value.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            value[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            g[i] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::DenseArray;

    fn scalar_store(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", DenseArray::vector(vec![value]));
        s
    }

    fn set_grad(s: &mut ParamStore, g: f64) {
        s.grad_mut("w").unwrap().data_mut()[0] = g;
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(0.7);
        adam_step(&mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.value("w").unwrap().data()[0], 0.7);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_hand_computed() {
        let mut s = scalar_store(0.0);
        set_grad(&mut s, 1.0);
        adam_step(&mut s, &AdamConfig::default()).unwrap();
        let p = s.get("w").unwrap();
        assert!((p.m.data()[0] - 0.1).abs() < 1e-15);
        assert!((p.v.data()[0] - 0.001).abs() < 1e-15);
        // m̂ = 0.1/0.1 = 1, v̂ = 0.001/0.001 = 1, Δθ = -1e-3 / (1 + 1e-8)
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-12);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let cfg = AdamConfig::default();
        let mut s = scalar_store(0.0);
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..1000 {
            set_grad(&mut s, 0.37);
            adam_step(&mut s, &cfg).unwrap();
            let now = s.value("w").unwrap().data()[0];
            last_step = (now - prev).abs();
            prev = now;
        }
        assert!((last_step - cfg.learning_rate).abs() / cfg.learning_rate < 0.01);
    }

    #[test]
    fn zero_betas_give_normalized_step() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 1e-8,
        };
        for &g in &[2.5, -0.3, 1e-3] {
            let mut s = scalar_store(1.0);
            set_grad(&mut s, g);
            adam_step(&mut s, &cfg).unwrap();
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((s.value("w").unwrap().data()[0] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn non_finite_gradient_names_param() {
        let mut s = scalar_store(1.0);
        s.insert("b", DenseArray::vector(vec![0.0, 0.0]));
        s.grad_mut("b").unwrap().data_mut()[1] = f64::NAN;
        assert_eq!(
            adam_step(&mut s, &AdamConfig::default()).unwrap_err(),
            NumError::NonFiniteGradient("b".into())
        );
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn rejects_bad_config() {
        let mut s = scalar_store(1.0);
        let cfg = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(adam_step(&mut s, &cfg).is_err());
    }
}
