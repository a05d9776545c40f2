use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Gradients, MlpParams};
use crate::error::{Error, Result};
use crate::math::{floor, powi, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters and accumulators. Moments are flattened in
/// [`MlpParams::iter`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        let moments = match kind {
            OptimizerKind::Adam => param_count,
            OptimizerKind::Sgd => 0,
        };
        Self {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; moments],
            second_moment: vec![0.0; moments],
        }
    }

    pub fn sgd() -> Self {
        Self::new(OptimizerKind::Sgd, 0)
    }

    pub fn adam(param_count: usize) -> Self {
        Self::new(OptimizerKind::Adam, param_count)
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Applies one update in place. Rejects non-finite gradients before
/// touching the parameters.
pub fn optimizer_step(params: &mut MlpParams, grads: &Gradients, state: &mut OptimizerState, lr: f64) -> Result<()> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    if !grads.is_finite() {
        return Err(Error::TrainingFault(format!("non-finite gradient at optimizer step {}", state.step + 1)));
    }
    state.step += 1;
    match state.kind {
        OptimizerKind::Sgd => {
            for (p, g) in params.iter_mut().zip(grads.iter()) {
                *p -= lr * g;
            }
        }
        OptimizerKind::Adam => {
            let n = params.param_count();
            if state.first_moment.len() != n {
                return Err(Error::Config(format!(
                    "adam state sized for {} parameters, network has {n}",
                    state.first_moment.len()
                )));
            }
            let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
            let t = state.step as u32;
            let c1 = 1.0 - powi(b1, t);
            let c2 = 1.0 - powi(b2, t);
            let moments = state.first_moment.iter_mut().zip(state.second_moment.iter_mut());
            for ((p, g), (m, v)) in params.iter_mut().zip(grads.iter()).zip(moments) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (sqrt(v_hat) + eps);
            }
        }
    }
    Ok(())
}

/// Step decay: `eta0 * decay_factor^floor((e - origin) / period)` for
/// zero-based epoch `e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub eta0: f64,
    pub decay_factor: f64,
    pub period_epochs: u64,
    #[serde(default)]
    pub origin_epoch: u64,
}

impl LrSchedule {
    pub fn new(eta0: f64, decay_factor: f64, period_epochs: u64) -> Result<Self> {
        if !(eta0 > 0.0) || !eta0.is_finite() {
            return Err(Error::Config(format!("eta0 must be > 0, got {eta0}")));
        }
        if !(decay_factor > 0.0 && decay_factor <= 1.0) {
            return Err(Error::Config(format!("decay_factor must lie in (0, 1], got {decay_factor}")));
        }
        if period_epochs == 0 {
            return Err(Error::Config("period_epochs must be >= 1".into()));
        }
        Ok(Self { eta0, decay_factor, period_epochs, origin_epoch: 0 })
    }

    pub fn lr_at(&self, epoch: u64) -> f64 {
        let elapsed = epoch.saturating_sub(self.origin_epoch);
        let steps = floor((elapsed / self.period_epochs) as f64);
        self.eta0 * libm::pow(self.decay_factor, steps)
    }

    /// New base rate starting at `epoch`; the decay restarts from there.
    pub fn restart(&mut self, eta0: f64, epoch: u64) {
        self.eta0 = eta0;
        self.origin_epoch = epoch;
    }
}
