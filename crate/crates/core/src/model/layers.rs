//! Linear layer followed by batch normalization, with the analytic backward
//! pass for both normalization modes.

use crate::error::Result;
use crate::numeric::{Matrix, ParamTape};

use super::Mode;

/// Tape slots of one linear + batch-norm block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockSlots {
    pub weight: usize,
    pub bias: usize,
    pub gamma: usize,
    pub beta: usize,
}

/// Per-feature statistics tracked for eval-mode normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            var: vec![1.0; width],
        }
    }

    /// Exponential moving average with the unbiased batch variance.
    pub(crate) fn update(&mut self, cache: &BlockCache, momentum: f64) {
        let b = cache.xhat.rows() as f64;
        let correction = if b > 1.0 { b / (b - 1.0) } else { 1.0 };
        for j in 0..self.mean.len() {
            self.mean[j] = (1.0 - momentum) * self.mean[j] + momentum * cache.batch_mean[j];
            self.var[j] =
                (1.0 - momentum) * self.var[j] + momentum * cache.batch_var[j] * correction;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    pub input: Matrix,
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub mode: Mode,
}

pub(crate) struct BlockGrads {
    pub input: Matrix,
    pub weight: Matrix,
    pub bias: Matrix,
    pub gamma: Matrix,
    pub beta: Matrix,
}

/// `y = γ · normalize(x·Wᵀ + b) + β` over the rows of `x`.
///
/// Train mode normalizes with the batch mean and biased variance; eval mode
/// uses `running`.
pub(crate) fn block_forward(
    tape: &ParamTape,
    slots: BlockSlots,
    x: &Matrix,
    mode: Mode,
    running: &RunningStats,
    eps: f64,
) -> Result<(Matrix, BlockCache)> {
    let mut z = x.matmul_nt(tape.param(slots.weight))?;
    let bias = tape.param(slots.bias).as_slice();
    let (rows, width) = z.shape();
    for i in 0..rows {
        for (v, b) in z.row_mut(i).iter_mut().zip(bias) {
            *v += b;
        }
    }

    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; width];
            for i in 0..rows {
                for (m, v) in mean.iter_mut().zip(z.row(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            let mut var = vec![0.0; width];
            for i in 0..rows {
                for ((s, v), m) in var.iter_mut().zip(z.row(i)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= rows as f64);
            (mean, var)
        }
        Mode::Eval => (running.mean.clone(), running.var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();

    let gamma = tape.param(slots.gamma).as_slice();
    let beta = tape.param(slots.beta).as_slice();
    let mut xhat = z;
    let mut y = Matrix::zeros(rows, width);
    for i in 0..rows {
        let xr = xhat.row_mut(i);
        for j in 0..width {
            xr[j] = (xr[j] - mean[j]) * inv_std[j];
        }
        let yr = y.row_mut(i);
        for j in 0..width {
            yr[j] = gamma[j] * xr[j] + beta[j];
        }
    }
    let cache = BlockCache {
        input: x.clone(),
        xhat,
        inv_std,
        batch_mean: mean,
        batch_var: var,
        mode,
    };
    Ok((y, cache))
}

pub(crate) fn block_backward(
    tape: &ParamTape,
    slots: BlockSlots,
    cache: &BlockCache,
    grad_out: &Matrix,
) -> Result<BlockGrads> {
    let (rows, width) = grad_out.shape();
    let gamma = tape.param(slots.gamma).as_slice();
    let mut d_gamma = Matrix::zeros(1, width);
    let mut d_beta = Matrix::zeros(1, width);
    let mut d_xhat = Matrix::zeros(rows, width);
    for i in 0..rows {
        let g = grad_out.row(i);
        let xh = cache.xhat.row(i);
        for j in 0..width {
            d_gamma.as_mut_slice()[j] += g[j] * xh[j];
            d_beta.as_mut_slice()[j] += g[j];
        }
        for (d, (gv, gm)) in d_xhat.row_mut(i).iter_mut().zip(g.iter().zip(gamma)) {
            *d = gv * gm;
        }
    }

    let mut d_z = Matrix::zeros(rows, width);
    match cache.mode {
        Mode::Train => {
            let n = rows as f64;
            let mut sum_d = vec![0.0; width];
            let mut sum_dx = vec![0.0; width];
            for i in 0..rows {
                let d = d_xhat.row(i);
                let xh = cache.xhat.row(i);
                for j in 0..width {
                    sum_d[j] += d[j];
                    sum_dx[j] += d[j] * xh[j];
                }
            }
            for i in 0..rows {
                let d = d_xhat.row(i);
                let xh = cache.xhat.row(i);
                let out = d_z.row_mut(i);
                for j in 0..width {
                    out[j] = cache.inv_std[j] / n * (n * d[j] - sum_d[j] - xh[j] * sum_dx[j]);
                }
            }
        }
        Mode::Eval => {
            for i in 0..rows {
                let d = d_xhat.row(i);
                let out = d_z.row_mut(i);
                for j in 0..width {
                    out[j] = d[j] * cache.inv_std[j];
                }
            }
        }
    }

    let mut d_bias = Matrix::zeros(1, width);
    for i in 0..rows {
        for (b, v) in d_bias.as_mut_slice().iter_mut().zip(d_z.row(i)) {
            *b += v;
        }
    }
    Ok(BlockGrads {
        input: d_z.matmul(tape.param(slots.weight))?,
        weight: d_z.matmul_tn(&cache.input)?,
        bias: d_bias,
        gamma: d_gamma,
        beta: d_beta,
    })
}
