use memvo_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::Weights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied as `p ← p − lr·λ·p` before the Adam update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 4e-4,
        }
    }
}

/// Adam moments for an ordered list of parameters.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    /// Update `params` in place. Gradients are checked before anything is
    /// modified, so a rejected step leaves both parameters and state intact.
    pub fn step_tensors(
        &mut self,
        names: &[String],
        params: &mut [Tensor],
        grads: &[Tensor],
        lr: f64,
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != names.len() {
            return Err(invalid("parameter, gradient and name counts differ"));
        }
        for ((name, p), g) in names.iter().zip(params.iter()).zip(grads) {
            if p.shape() != g.shape() {
                return Err(invalid(format!("gradient shape mismatch for `{name}`")));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { name: name.clone() });
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len()
            || self
                .first
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.len() != p.numel())
        {
            return Err(invalid("optimizer state does not match the parameter set"));
        }

        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let mut data = p.to_vec();
            for (j, x) in data.iter_mut().enumerate() {
                let gj = g.data()[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *x -= lr * weight_decay * *x;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            *p = Tensor::new(p.shape().to_vec(), data)?;
        }
        Ok(())
    }

    pub fn step(&mut self, params: &mut Weights<Tensor>, grads: &Weights<Tensor>, lr: f64) -> Result<()> {
        let names = params.names();
        let mut flat: Vec<Tensor> = params.flatten().into_iter().map(|(_, t)| t).collect();
        let g: Vec<Tensor> = grads.flatten().into_iter().map(|(_, t)| t).collect();
        self.step_tensors(&names, &mut flat, &g, lr)?;
        *params = params.unflatten(flat)?;
        Ok(())
    }
}

/// Step decay: `base · 0.5^⌊iteration / decay_every⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub decay_every: u64,
}

impl LrSchedule {
    /// 1e-4 halved every 60,000 iterations.
    pub fn full_scale() -> Self {
        Self {
            base: 1e-4,
            decay_every: 60_000,
        }
    }

    pub fn lr_at(&self, iteration: u64) -> f64 {
        let halvings = iteration / self.decay_every.max(1);
        self.base * 0.5f64.powi(halvings.min(i32::MAX as u64) as i32)
    }
}
