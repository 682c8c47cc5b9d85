//! Adam and the step-decay learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `lr(e) = initial * per_epoch^e * per_5_epochs^floor(e / 5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_per_epoch: f64,
    pub decay_per_5_epochs: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 1e-3,
            decay_per_epoch: 0.95,
            decay_per_5_epochs: 0.5,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |d: f64| d > 0.0 && d <= 1.0;
        if !(self.initial > 0.0) || !in_unit(self.decay_per_epoch) || !in_unit(self.decay_per_5_epochs) {
            return Err(Error::Config(alloc::format!(
                "learning-rate schedule needs lr > 0 and decays in (0, 1]: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.initial
            * powu(self.decay_per_epoch, epoch)
            * powu(self.decay_per_5_epochs, epoch / 5)
    }
}

/// `base^exp` by binary exponentiation.
fn powu(base: f64, mut exp: usize) -> f64 {
    let (mut acc, mut b) = (1.0, base);
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= b;
        }
        b *= b;
        exp >>= 1;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
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

/// Adam state for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Adam {
            config,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update from each parameter's gradient
    /// slot. Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut [Tensor], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter list changed");
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - powu(beta1, self.step as usize);
        let bc2 = 1.0 - powu(beta2, self.step as usize);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = p.grad().map(<[f64]>::to_vec) else { continue };
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                *w -= lr * mh / (libm::sqrt(vh) + eps);
            }
        }
    }
}
