//! Adam with bias correction, linear warmup then linear decay to zero, and
//! gradient accumulation.

use serde::{Deserialize, Serialize};

use crate::autograd::params::ParamStore;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Piecewise-linear learning-rate multiplier: 0 -> 1 over the first
/// `warmup_fraction * total_steps` steps, then 1 -> 0 at `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmupLinear {
    pub warmup_fraction: f64,
    pub total_steps: usize,
}

impl WarmupLinear {
    pub fn new(warmup_fraction: f64, total_steps: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&warmup_fraction) || total_steps == 0 {
            return Err(Error::contract(format!(
                "schedule needs warmup fraction in [0, 1] and total steps >= 1, got {warmup_fraction} / {total_steps}"
            )));
        }
        Ok(Self {
            warmup_fraction,
            total_steps,
        })
    }

    pub fn factor(&self, step: usize) -> f64 {
        let total = self.total_steps as f64;
        let warm = self.warmup_fraction * total;
        let s = (step as f64).min(total);
        if s < warm {
            s / warm
        } else if warm >= total {
            1.0
        } else {
            (total - s) / (total - warm)
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub base_lr: f64,
    pub schedule: WarmupLinear,
    pub accumulation: usize,
    step: usize,
    pending: usize,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, base_lr: f64, schedule: WarmupLinear, accumulation: usize) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        Self {
            base_lr,
            schedule,
            accumulation: accumulation.max(1),
            step: 0,
            pending: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Number of parameter updates applied so far.
    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        self.base_lr * self.schedule.factor(self.step)
    }

    /// Note that one micro-batch worth of gradients has been accumulated.
    /// Returns true when an accumulation boundary is reached.
    pub fn accumulate(&mut self) -> bool {
        self.pending += 1;
        self.pending >= self.accumulation
    }

    pub fn has_pending(&self) -> bool {
        self.pending > 0
    }

    /// Apply one update from the accumulated gradients and zero them.
    ///
    /// Gradients are divided by the number of accumulated micro-batches
    /// (the accumulation period, except for a short trailing group).
    pub fn step(&mut self, store: &mut ParamStore) {
        let divisor = self.pending.max(1) as f64;
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let p = store.get_mut(id);
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for j in 0..p.data.len() {
                let g = p.grad[j] / divisor;
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * g;
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p.data[j] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                p.grad[j] = 0.0;
            }
        }
        self.pending = 0;
    }
}
