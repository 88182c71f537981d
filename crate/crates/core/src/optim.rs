//! Adaptive moment optimizer with decoupled weight decay.
//!
//! Decay multiplies the weights directly; it never passes through the moment
//! estimates. Updates run in parameter declaration order with a fixed
//! accumulation order, so identical inputs give bitwise-identical weights.

use alloc::vec::Vec;

use crate::math;
use crate::params::ParamSet;
use crate::train::TrainError;

/// Optimizer hyperparameters, typically borrowed from a train configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

/// First and second moment buffers plus the step counter, aligned with the
/// parameter set's declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u64,
    /// Running `beta1^step` and `beta2^step` for bias correction.
    beta1_pow: f64,
    beta2_pow: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> AdamState {
        let m: Vec<Vec<f64>> = params.iter().map(|p| alloc::vec![0.0; p.numel()]).collect();
        let v = m.clone();
        AdamState {
            step: 0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One update over every parameter. `grads` must align with the set's
/// declaration order, as produced by `ParamSet::read_grads`.
pub fn step(
    params: &mut ParamSet,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &AdamW,
) -> Result<(), TrainError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(TrainError::StateShape {
            params: params.len(),
            grads: grads.len(),
            moments: state.m.len(),
        });
    }
    for i in 0..params.len() {
        let p = params.at(i);
        if grads[i].len() != p.numel() || state.m[i].len() != p.numel() {
            return Err(TrainError::GradShape {
                name: p.name.clone(),
                expected: p.numel(),
                got: grads[i].len(),
            });
        }
        for &g in &grads[i] {
            if !g.is_finite() {
                return Err(TrainError::NonFiniteGrad {
                    name: p.name.clone(),
                });
            }
        }
    }
    state.step += 1;
    state.beta1_pow *= cfg.beta1;
    state.beta2_pow *= cfg.beta2;
    let bias1 = 1.0 - state.beta1_pow;
    let bias2 = 1.0 - state.beta2_pow;
    for i in 0..params.len() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let g = &grads[i];
        let w = &mut params.at_mut(i).data;
        for j in 0..w.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            w[j] -= cfg.learning_rate * cfg.weight_decay * w[j];
            w[j] -= cfg.learning_rate * m_hat / (math::sqrt(v_hat) + cfg.epsilon);
        }
    }
    Ok(())
}
