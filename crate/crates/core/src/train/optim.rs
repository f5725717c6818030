use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Error, Result};

/// RMSprop with per-parameter squared-gradient averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropState {
    pub gamma: f64,
    pub lr: f64,
    pub eps: f64,
    pub accumulators: Vec<Vec<f64>>,
}

impl RmsPropState {
    /// `gamma = 0.9`, `eps = 1e-8`.
    pub fn new(lr: f64) -> Result<Self> {
        Self::with(0.9, lr, 1e-8)
    }

    /// `lr = 0` is accepted to freeze parameters.
    pub fn with(gamma: f64, lr: f64, eps: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) || !(lr >= 0.0) || !(eps > 0.0) || !lr.is_finite() {
            return arg_err(format!("RMSprop needs 0 < gamma < 1, lr >= 0, eps > 0; got {gamma}, {lr}, {eps}"));
        }
        Ok(Self { gamma, lr, eps, accumulators: Vec::new() })
    }

    /// `acc ← γ acc + (1 − γ) g²; θ ← θ − lr g / (√acc + eps)`. Accumulators
    /// are zero-initialized on the first call.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(&grads).any(|(p, g)| p.len() != g.len()) {
            return shape_err("parameter and gradient groups differ in shape");
        }
        if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite(" gradient passed to RMSprop".into()));
        }
        if self.accumulators.is_empty() {
            self.accumulators = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        if self.accumulators.len() != grads.len() || self.accumulators.iter().zip(&grads).any(|(a, g)| a.len() != g.len()) {
            return shape_err("accumulators do not match the parameter groups");
        }
        let (gamma, lr, eps) = (self.gamma, self.lr, self.eps);
        for ((p, g), acc) in params.into_iter().zip(grads).zip(&mut self.accumulators) {
            for ((theta, &gi), a) in p.iter_mut().zip(g).zip(acc.iter_mut()) {
                *a = gamma * *a + (1.0 - gamma) * gi * gi;
                *theta -= lr * gi / (a.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn rmsprop_step(state: &mut RmsPropState, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
    state.step(params, grads)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive checks without a new best loss.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopper {
    pub patience: usize,
    pub best: f64,
    pub since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, since_best: 0 }
    }

    pub fn observe(&mut self, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.since_best = 0;
            StopDecision::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}
