//! Adam with global gradient-norm clipping and per-epoch exponential
//! learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Maximum global L2 norm of the gradient.
    pub clip_norm: f64,
    /// Learning-rate factor applied once per epoch.
    pub lr_decay: f64,
    pub steps_per_epoch: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::end_to_end()
    }
}

impl AdamConfig {
    /// The end-to-end training recipe: lr 2e-5, betas (0.5, 0.999).
    pub fn end_to_end() -> Self {
        Self {
            lr: 2e-5,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 1.0,
            lr_decay: 0.95,
            steps_per_epoch: 100,
        }
    }

    /// The pretraining recipe: lr 2e-4, betas (0.9, 0.999). Default for pose
    /// fitting.
    pub fn pretrain() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            ..Self::end_to_end()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "pretrain" => Some(Self::pretrain()),
            "e2e" => Some(Self::end_to_end()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be > 0, got {}", self.clip_norm));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        if self.steps_per_epoch == 0 {
            return bad("steps_per_epoch must be >= 1".into());
        }
        Ok(())
    }

    /// `lr * lr_decay^floor(step / steps_per_epoch)`.
    pub fn effective_lr(&self, step: u64) -> f64 {
        let epoch = step / self.steps_per_epoch;
        self.lr * self.lr_decay.powf(epoch as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// Diagnostics for one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub lr: f64,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let mut s = max_norm / norm;
        // rounding can leave the rescaled norm an ulp above the bound
        loop {
            let scaled = grad.iter().map(|g| (g * s) * (g * s)).sum::<f64>().sqrt();
            if scaled <= max_norm {
                break;
            }
            s *= 1.0 - f64::EPSILON;
        }
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// One clipped, bias-corrected Adam update of `params`.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grad: &[f64],
    cfg: &AdamConfig,
) -> Result<StepInfo> {
    if params.len() != grad.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::SizeMismatch {
            what: "adam gradient",
            expected: params.len(),
            found: grad.len(),
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Diverged {
            step: state.step as usize,
            reason: format!("non-finite gradient entry {i}"),
        });
    }
    let mut g = grad.to_vec();
    let grad_norm = clip_grad_norm(&mut g, cfg.clip_norm);
    let clipped_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();

    let lr = cfg.effective_lr(state.step);
    state.step += 1;
    let t = state.step.min(i32::MAX as u64) as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(StepInfo {
        lr,
        grad_norm,
        clipped_norm,
    })
}
