use serde::{Deserialize, Serialize};

use crate::error::{check_len, PatError, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const ADADELTA_RHO: f64 = 0.9;
pub const ADADELTA_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Adadelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Halve the learning rate every this many epochs.
    #[serde(default)]
    pub halve_every: Option<usize>,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr,
            halve_every: None,
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr,
            halve_every: None,
        }
    }

    pub fn adadelta(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adadelta,
            lr,
            halve_every: None,
        }
    }

    pub fn with_halving(mut self, period: usize) -> Self {
        self.halve_every = Some(period);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(PatError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.halve_every == Some(0) {
            return Err(PatError::Config("halve_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SlotState {
    Fresh,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
    Adadelta { square_avg: Vec<f64>, acc_delta: Vec<f64> },
}

/// Optimizer with one accumulator slot per parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    lr: f64,
    slots: Vec<SlotState>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, n_slots: usize) -> Self {
        Optimizer {
            lr: config.lr,
            config,
            slots: vec![SlotState::Fresh; n_slots],
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// `η = η₀ · 0.5^⌊epoch / period⌋`; constant without a schedule.
    pub fn schedule_lr(&mut self, epoch: usize) {
        self.lr = scheduled_lr(&self.config, epoch);
    }

    pub fn step(&mut self, slot: usize, params: &mut [f64], grad: &[f64]) -> Result<()> {
        check_len("optimizer gradient", params.len(), grad.len())?;
        let lr = self.lr;
        let state = self
            .slots
            .get_mut(slot)
            .ok_or_else(|| PatError::Usage(format!("optimizer slot {slot} out of range")))?;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let (beta1, beta2, eps) = (ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
                if *state == SlotState::Fresh {
                    *state = SlotState::Adam {
                        m: vec![0.0; params.len()],
                        v: vec![0.0; params.len()],
                        t: 0,
                    };
                }
                let SlotState::Adam { m, v, t } = state else {
                    unreachable!("slot kind fixed by config")
                };
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t);
                let bc2 = 1.0 - beta2.powi(*t);
                for i in 0..params.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            OptimizerKind::Adadelta => {
                let (rho, eps) = (ADADELTA_RHO, ADADELTA_EPS);
                if *state == SlotState::Fresh {
                    *state = SlotState::Adadelta {
                        square_avg: vec![0.0; params.len()],
                        acc_delta: vec![0.0; params.len()],
                    };
                }
                let SlotState::Adadelta { square_avg, acc_delta } = state else {
                    unreachable!("slot kind fixed by config")
                };
                for i in 0..params.len() {
                    let g = grad[i];
                    square_avg[i] = rho * square_avg[i] + (1.0 - rho) * g * g;
                    let delta = (acc_delta[i] + eps).sqrt() / (square_avg[i] + eps).sqrt() * g;
                    acc_delta[i] = rho * acc_delta[i] + (1.0 - rho) * delta * delta;
                    params[i] -= lr * delta;
                }
            }
        }
        Ok(())
    }
}

pub fn scheduled_lr(config: &OptimizerConfig, epoch: usize) -> f64 {
    match config.halve_every {
        Some(period) if period > 0 => config.lr * 0.5f64.powi((epoch / period) as i32),
        _ => config.lr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut o = Optimizer::new(OptimizerConfig::sgd(0.1), 1);
        let mut p = [1.0];
        o.step(0, &mut p, &[2.0]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut o = Optimizer::new(OptimizerConfig::adam(0.01), 1);
        let mut p = [0.5];
        o.step(0, &mut p, &[1.0]).unwrap();
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + 1e-8)
        assert!((0.5 - p[0] - 0.01 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_is_noop() {
        for cfg in [OptimizerConfig::sgd(0.1), OptimizerConfig::adam(0.1), OptimizerConfig::adadelta(1.0)] {
            let mut o = Optimizer::new(cfg, 1);
            let mut p = [0.3, -0.7];
            for _ in 0..3 {
                o.step(0, &mut p, &[0.0, 0.0]).unwrap();
            }
            assert_eq!(p, [0.3, -0.7]);
        }
    }

    #[test]
    fn adadelta_first_step() {
        // square_avg = 0.1 g², delta = sqrt(eps)/sqrt(0.1 g² + eps) · g
        let mut o = Optimizer::new(OptimizerConfig::adadelta(1.0), 1);
        let mut p = [0.0];
        o.step(0, &mut p, &[2.0]).unwrap();
        let expect = -(1e-6f64).sqrt() / (0.4f64 + 1e-6).sqrt() * 2.0;
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn halving_schedule() {
        let cfg = OptimizerConfig::adadelta(1.0).with_halving(700);
        assert_eq!(scheduled_lr(&cfg, 699), 1.0);
        assert_eq!(scheduled_lr(&cfg, 700), 0.5);
        assert_eq!(scheduled_lr(&cfg, 1400), 0.25);
        assert_eq!(scheduled_lr(&OptimizerConfig::sgd(0.3), 5000), 0.3);
        assert_eq!(scheduled_lr(&OptimizerConfig::sgd(1.0).with_halving(1), 3), 0.125);
    }

    #[test]
    fn config_json() {
        let cfg: OptimizerConfig = serde_json::from_str(r#"{"kind":"adam","lr":0.001}"#).unwrap();
        assert_eq!(cfg, OptimizerConfig::adam(0.001));
        assert!(serde_json::from_str::<OptimizerConfig>(r#"{"kind":"sgd","lr":0.1,"bogus":1}"#).is_err());
    }
}
