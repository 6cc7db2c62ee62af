//! AdamW with decoupled weight decay and a linear-warmup cosine schedule.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{cos, pow, sqrt};

use crate::error::{Result, SeloraError};

const PI: f64 = core::f64::consts::PI;

/// Optimizer hyperparameters plus the schedule horizon and batch size.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            warmup_steps: 100,
            total_steps: 1000,
            batch_size: 32,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(SeloraError::InvalidDimension(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(SeloraError::InvalidDimension(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(SeloraError::InvalidDimension(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(SeloraError::InvalidDimension(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.total_steps == 0 {
            return Err(SeloraError::InvalidDimension(
                "total_steps must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(SeloraError::InvalidDimension(
                "batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Learning rate at step `t` (1-based): linear warmup from zero over
/// `warmup_steps`, then cosine decay to exactly zero at `total_steps`.
pub fn learning_rate_at(cfg: &OptimizerConfig, t: u64) -> f64 {
    if cfg.warmup_steps > 0 && t <= cfg.warmup_steps {
        return cfg.learning_rate * t as f64 / cfg.warmup_steps as f64;
    }
    let span = cfg.total_steps.saturating_sub(cfg.warmup_steps).max(1);
    let progress = (t.saturating_sub(cfg.warmup_steps)) as f64 / span as f64;
    let progress = progress.min(1.0);
    cfg.learning_rate * 0.5 * (1.0 + cos(PI * progress))
}

/// Per-coordinate moment accumulators aligned with the flattened parameter
/// layout `[F_A, F_B, m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    t: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    config: OptimizerConfig,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, coordinates: usize) -> Self {
        OptimizerState {
            t: 0,
            first_moment: vec![0.0; coordinates],
            second_moment: vec![0.0; coordinates],
            config,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// Rebuilds state from stored parts (checkpoint loading).
    pub fn from_parts(
        config: OptimizerConfig,
        t: u64,
        first_moment: Vec<f64>,
        second_moment: Vec<f64>,
    ) -> Result<Self> {
        if first_moment.len() != second_moment.len() {
            return Err(SeloraError::LayoutMismatch {
                expected: first_moment.len(),
                actual: second_moment.len(),
            });
        }
        Ok(OptimizerState {
            t,
            first_moment,
            second_moment,
            config,
        })
    }
}

/// One AdamW step at step index `t` (must be `state.t + 1`). Decoupled decay
/// `theta *= 1 - lr_t * lambda` is applied before the moment update.
pub fn adamw_step(
    state: &mut OptimizerState,
    params: &mut [f64],
    grads: &[f64],
    t: u64,
) -> Result<()> {
    if params.len() != state.first_moment.len() || grads.len() != params.len() {
        return Err(SeloraError::LayoutMismatch {
            expected: state.first_moment.len(),
            actual: if params.len() != state.first_moment.len() {
                params.len()
            } else {
                grads.len()
            },
        });
    }
    if t != state.t + 1 {
        return Err(SeloraError::InvalidDimension(format!(
            "optimizer step {t} out of order; expected {}",
            state.t + 1
        )));
    }

    let cfg = &state.config;
    let lr = learning_rate_at(cfg, t);

    if cfg.weight_decay != 0.0 {
        let decay = 1.0 - lr * cfg.weight_decay;
        for p in params.iter_mut() {
            *p *= decay;
        }
    }

    let bias1 = 1.0 - pow(cfg.beta1, t as f64);
    let bias2 = 1.0 - pow(cfg.beta2, t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        state.first_moment[i] = cfg.beta1 * state.first_moment[i] + (1.0 - cfg.beta1) * g;
        state.second_moment[i] = cfg.beta2 * state.second_moment[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.first_moment[i] / bias1;
        let v_hat = state.second_moment[i] / bias2;
        params[i] -= lr * m_hat / (sqrt(v_hat) + cfg.epsilon);
    }
    state.t = t;
    Ok(())
}
