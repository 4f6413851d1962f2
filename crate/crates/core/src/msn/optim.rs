use alloc::{vec, vec::Vec};
use core::f64::consts::PI;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamWState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam step with decoupled weight decay:
/// `θ ← θ − lr·(m̂ / (√v̂ + ε) + wd·θ)`.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamWState,
    lr: f64,
    weight_decay: f64,
    cfg: AdamWConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: params.len(),
            actual: grads.len().min(state.m.len()),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * (m_hat / (libm::sqrt(v_hat) + cfg.eps) + weight_decay * params[i]);
    }
    Ok(())
}

/// Cosine decay from `base_lr` at epoch 0 to `final_lr` at the last epoch.
pub fn cosine_lr(epoch: usize, total_epochs: usize, base_lr: f64, final_lr: f64) -> f64 {
    if total_epochs <= 1 {
        return base_lr;
    }
    let progress = epoch.min(total_epochs - 1) as f64 / (total_epochs - 1) as f64;
    final_lr + 0.5 * (base_lr - final_lr) * (1.0 + libm::cos(PI * progress))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_zero_decay_is_noop() {
        let mut p = [0.5, -1.0, 2.0];
        let mut s = AdamWState::new(3);
        adamw_step(&mut p, &[0.0; 3], &mut s, 0.1, 0.0, AdamWConfig::default()).unwrap();
        assert_eq!(p, [0.5, -1.0, 2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // m̂ = g and v̂ = g² after bias correction, so the step is lr·g/(|g| + ε).
        for g in [3.0, -0.02, 1e-3] {
            let mut p = [1.0];
            let mut s = AdamWState::new(1);
            adamw_step(&mut p, &[g], &mut s, 0.01, 0.0, AdamWConfig::default()).unwrap();
            let expected = 1.0 - 0.01 * g / (f64::abs(g) + 1e-8);
            assert!((p[0] - expected).abs() < 1e-12);
            assert!((p[0] - (1.0 - 0.01 * g.signum())).abs() < 1e-7);
        }
    }

    #[test]
    fn decay_only_shrinks_geometrically() {
        let mut p = [2.0, -4.0];
        let mut s = AdamWState::new(2);
        adamw_step(&mut p, &[0.0, 0.0], &mut s, 0.1, 0.5, AdamWConfig::default()).unwrap();
        assert!((p[0] - 2.0 * 0.95).abs() < 1e-15);
        assert!((p[1] + 4.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = [0.0; 2];
        let mut s = AdamWState::new(2);
        assert!(adamw_step(&mut p, &[0.0; 3], &mut s, 0.1, 0.0, AdamWConfig::default()).is_err());
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 11, 1.0, 0.1), 1.0);
        assert!((cosine_lr(10, 11, 1.0, 0.1) - 0.1).abs() < 1e-15);
        assert!((cosine_lr(5, 11, 1.0, 0.1) - 0.55).abs() < 1e-15);
        assert_eq!(cosine_lr(0, 1, 0.3, 0.0), 0.3);
    }
}
