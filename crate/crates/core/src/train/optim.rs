use serde::{Deserialize, Serialize};

use crate::numeric::{Matrix, ParamTape};

/// Adaptive moment estimation hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamTape) -> Self {
        Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One bias-corrected update from the gradients stored in the tape.
    pub fn step(&mut self, tape: &mut ParamTape) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for ((param, grad), (m, v)) in tape
            .params_and_grads_mut()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let p = param.as_mut_slice();
            let g = grad.as_slice();
            let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                p[i] -= learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut tape = ParamTape::new();
        tape.push("p", Matrix::row_vector(&[1.0, -2.0]));
        tape.accumulate(&[Matrix::row_vector(&[0.5, -3.0])], 1.0).unwrap();
        let mut opt = Adam::new(AdamConfig::default(), &tape);
        opt.step(&mut tape);
        let p = tape.param(0).as_slice();
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-2.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut tape = ParamTape::new();
        tape.push("p", Matrix::row_vector(&[3.0]));
        let mut opt = Adam::new(
            AdamConfig {
                learning_rate: 0.1,
                ..AdamConfig::default()
            },
            &tape,
        );
        for _ in 0..500 {
            tape.zero_grads();
            let x = tape.param(0)[(0, 0)];
            tape.accumulate(&[Matrix::row_vector(&[2.0 * (x - 1.0)])], 1.0).unwrap();
            opt.step(&mut tape);
        }
        assert!((tape.param(0)[(0, 0)] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut tape = ParamTape::new();
        tape.push("p", Matrix::row_vector(&[0.3, 0.7]));
        let before = tape.clone();
        tape.accumulate(&[Matrix::row_vector(&[1.0, -1.0])], 1.0).unwrap();
        let mut opt = Adam::new(
            AdamConfig {
                learning_rate: 0.0,
                ..AdamConfig::default()
            },
            &tape,
        );
        for _ in 0..10 {
            opt.step(&mut tape);
        }
        assert_eq!(tape.params(), before.params());
    }
}
