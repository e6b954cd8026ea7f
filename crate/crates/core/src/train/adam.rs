use std::collections::BTreeMap;

use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::net::NetworkWeights;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adam {
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters without a gradient are left alone,
    /// but the step counter advances for all.
    pub fn step(&mut self, weights: &mut NetworkWeights, grads: &BTreeMap<String, Tensor>, lr: f64) -> Result<()> {
        for (name, g) in grads {
            let p = weights
                .get(name)
                .ok_or_else(|| Error::Shape(format!("gradient for unknown parameter {name}")))?;
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "{name}: gradient shape {:?} vs parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (name, g) in grads {
            let n = g.numel();
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let p = weights.get_mut(name).expect("checked above").data_mut();
            for i in 0..n {
                let gi = g.data()[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

/// Step decay: `lr0 * 10^-(epoch / 10)`.
pub fn lr_schedule(epoch: usize, lr0: f64) -> f64 {
    lr0 * 10f64.powi(-((epoch / 10) as i32))
}
