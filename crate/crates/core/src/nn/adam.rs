use serde::{Deserialize, Serialize};

use super::{Parameter, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update in place. `step` is the 1-based update count.
pub fn adam_step<F: Scalar>(params: &mut [&mut Parameter<F>], lr: f64, step: u64, cfg: &AdamConfig) {
    assert!(step >= 1, "adam step count starts at 1");
    let t = step as i32;
    let b1 = F::of(cfg.beta1);
    let b2 = F::of(cfg.beta2);
    let one = F::one();
    let corr1 = F::of(1.0 - cfg.beta1.powi(t));
    let corr2 = F::of(1.0 - cfg.beta2.powi(t));
    let lr = F::of(lr);
    let eps = F::of(cfg.eps);
    for p in params.iter_mut() {
        let Parameter {
            value,
            grad,
            adam_m,
            adam_v,
            ..
        } = &mut **p;
        ndarray::Zip::from(value)
            .and(&*grad)
            .and(adam_m)
            .and(adam_v)
            .for_each(|w, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
}
