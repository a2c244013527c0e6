use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{Error, Result};

/// Piecewise-constant learning rate: `initial` until the first milestone
/// epoch, then each milestone's rate from its epoch onwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    #[serde(default)]
    pub milestones: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            initial: lr,
            milestones: Vec::new(),
        }
    }

    pub fn rate_at(&self, epoch: usize) -> f64 {
        self.milestones
            .iter()
            .filter(|(start, _)| epoch >= *start)
            .max_by_key(|(start, _)| *start)
            .map_or(self.initial, |(_, lr)| *lr)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |lr: f64| lr > 0.0 && lr.is_finite();
        if !ok(self.initial) || !self.milestones.iter().all(|(_, lr)| ok(*lr)) {
            return Err(Error::invalid("learning_rate", "rates must be positive and finite"));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Params>(params: &P, lr: f64) -> Self {
        let shapes: Vec<usize> = params.params().iter().map(|p| p.len()).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step<P: Params>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.params();
        let mut p = params.params_mut();
        if p.len() != self.m.len() || g.len() != self.m.len() {
            return Err(Error::ShapeMismatch("parameter groups differ from optimizer state".into()));
        }
        for i in 0..p.len() {
            if p[i].len() != self.m[i].len() || g[i].len() != self.m[i].len() {
                return Err(Error::ShapeMismatch(format!("parameter group {i} changed size")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..p.len() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p[i].len() {
                let gj = g[i][j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[i][j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
