use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EpisodeForward, ScoredSet, SubspaceEnsemble};
use crate::numeric::{cosine_similarity_grad, log_sum_exp, Matrix};

/// Loss components and their weights for one step.
///
/// `total == l_sup + alpha·l_qur + beta·l_dis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_sup: f64,
    pub l_qur: f64,
    pub l_dis: f64,
    pub alpha: f64,
    pub beta: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.l_sup.is_finite() && self.l_qur.is_finite() && self.l_dis.is_finite() && self.total.is_finite()
    }
}

pub fn total_loss(l_sup: f64, l_qur: f64, l_dis: f64, alpha: f64, beta: f64) -> LossBreakdown {
    LossBreakdown {
        l_sup,
        l_qur,
        l_dis,
        alpha,
        beta,
        total: l_sup + alpha * l_qur + beta * l_dis,
    }
}

/// How the per-subspace distributions enter the cross-entropy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossEntropyMode {
    /// `−log p̄(y)` with `p̄` the subspace-averaged probability (the soft
    /// vote distribution).
    #[default]
    MeanProbability,
    /// `−(1/ν) Σ_ν log S_y(ν)`.
    MeanOfSubspaces,
}

/// Mean cross-entropy over the points of a scored set.
pub fn cross_entropy(set: &ScoredSet, mode: CrossEntropyMode) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Degenerate("cross-entropy over an empty set".into()));
    }
    let nu = set.subspaces() as f64;
    let mut sum = 0.0;
    for (i, &y) in set.labels().iter().enumerate() {
        let true_logs: Vec<f64> = (0..set.subspaces()).map(|v| set.log_probs(i, v)[y]).collect();
        sum += match mode {
            CrossEntropyMode::MeanProbability => nu.ln() - log_sum_exp(&true_logs)?,
            CrossEntropyMode::MeanOfSubspaces => -true_logs.iter().sum::<f64>() / nu,
        };
    }
    Ok(sum / set.len() as f64)
}

/// Gradient of `scale · cross_entropy(set)` with respect to every distance,
/// flattened in the [`ScoredSet`] layout.
pub(crate) fn cross_entropy_grad(
    set: &ScoredSet,
    mode: CrossEntropyMode,
    scale: f64,
) -> Result<Vec<f64>> {
    let (nu, n_way) = (set.subspaces(), set.n_way());
    let mut grad = vec![0.0; set.len() * nu * n_way];
    if scale == 0.0 {
        return Ok(grad);
    }
    let per_point = scale / set.len() as f64;
    for (i, &y) in set.labels().iter().enumerate() {
        let true_logs: Vec<f64> = (0..nu).map(|v| set.log_probs(i, v)[y]).collect();
        let lse = log_sum_exp(&true_logs)?;
        for v in 0..nu {
            // ∂ℓ/∂R_k(ν) = w_ν (δ_yk − S_k(ν))
            let weight = match mode {
                CrossEntropyMode::MeanProbability => (true_logs[v] - lse).exp(),
                CrossEntropyMode::MeanOfSubspaces => 1.0 / nu as f64,
            };
            let probs = set.probs(i, v);
            let base = (i * nu + v) * n_way;
            for k in 0..n_way {
                let indicator = if k == y { 1.0 } else { 0.0 };
                grad[base + k] = per_point * weight * (indicator - probs[k]);
            }
        }
    }
    Ok(grad)
}

/// Cross-entropy of the support points against the episode prototypes.
pub fn support_loss(forward: &EpisodeForward, mode: CrossEntropyMode) -> Result<f64> {
    cross_entropy(&forward.support, mode)
}

/// Cross-entropy of the query points against the episode prototypes.
pub fn query_loss(forward: &EpisodeForward, mode: CrossEntropyMode) -> Result<f64> {
    cross_entropy(&forward.query, mode)
}

/// Flattened parameters of head `v` that define its subspace orientation.
fn head_vector(model: &SubspaceEnsemble, head: usize, include_bias: bool) -> Vec<f64> {
    let mut theta = model.head_weight(head).as_slice().to_vec();
    if include_bias {
        theta.extend_from_slice(model.params().param(model.head_bias_slot(head)).as_slice());
    }
    theta
}

/// Sum of `cos(θ_x, θ_y)` over unordered head pairs `x < y`.
pub fn discriminative_loss(model: &SubspaceEnsemble, include_bias: bool) -> Result<f64> {
    discriminative_loss_grad(model, include_bias).map(|(l, _)| l)
}

/// Discriminative loss and its gradient, returned as full-tape tensors
/// (non-zero only in head weight, and optionally bias, slots).
pub(crate) fn discriminative_loss_grad(
    model: &SubspaceEnsemble,
    include_bias: bool,
) -> Result<(f64, Vec<Matrix>)> {
    let nu = model.config().subspaces;
    let thetas: Vec<Vec<f64>> = (0..nu).map(|v| head_vector(model, v, include_bias)).collect();
    let mut d_theta: Vec<Vec<f64>> = thetas.iter().map(|t| vec![0.0; t.len()]).collect();
    let mut loss = 0.0;
    for x in 0..nu {
        for y in x + 1..nu {
            let (cos, gx, gy) = cosine_similarity_grad(&thetas[x], &thetas[y]).map_err(|_| {
                Error::Degenerate(format!("head {x} or {y} has zero-norm weights"))
            })?;
            loss += cos;
            d_theta[x].iter_mut().zip(&gx).for_each(|(a, b)| *a += b);
            d_theta[y].iter_mut().zip(&gy).for_each(|(a, b)| *a += b);
        }
    }
    let mut grads = model.params().zeros_like();
    for (v, d) in d_theta.into_iter().enumerate() {
        let w_slot = model.head_weight_slot(v);
        let w_len = grads[w_slot].len();
        grads[w_slot].as_mut_slice().copy_from_slice(&d[..w_len]);
        if include_bias {
            let b_slot = model.head_bias_slot(v);
            grads[b_slot].as_mut_slice().copy_from_slice(&d[w_len..]);
        }
    }
    Ok((loss, grads))
}

/// Mean `|cos|` over unordered pairs of head weight matrices (0 for ν = 1).
pub fn mean_abs_head_cosine(model: &SubspaceEnsemble) -> Result<f64> {
    let nu = model.config().subspaces;
    if nu < 2 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for x in 0..nu {
        for y in x + 1..nu {
            sum += crate::numeric::cosine_similarity(
                model.head_weight(x).as_slice(),
                model.head_weight(y).as_slice(),
            )?
            .abs();
        }
    }
    Ok(sum / (nu * (nu - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_ensemble, EnsembleConfig};

    fn set(probs: Vec<f64>, labels: Vec<usize>, subspaces: usize, n_way: usize) -> ScoredSet {
        ScoredSet::from_probabilities(subspaces, n_way, labels, probs).unwrap()
    }

    #[test]
    fn decomposition_examples() {
        let b = total_loss(0.5, 0.2, 0.1, 1.0, 1.0);
        assert!((b.total - 0.8).abs() < 1e-15);
        let b = total_loss(0.5, 0.2, 0.1, 1.0, 0.0);
        assert_eq!(b.total, 0.5 + 0.2);
    }

    #[test]
    fn cross_entropy_examples() {
        let perfect = set(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0], vec![0, 1], 1, 3);
        assert_eq!(cross_entropy(&perfect, CrossEntropyMode::MeanProbability).unwrap(), 0.0);
        let third = 1.0 / 3.0;
        let uniform = set(vec![third; 12], vec![0, 2], 2, 3);
        for mode in [CrossEntropyMode::MeanProbability, CrossEntropyMode::MeanOfSubspaces] {
            let ce = cross_entropy(&uniform, mode).unwrap();
            assert!((ce - 3f64.ln()).abs() < 1e-12, "{mode:?}");
        }
    }

    #[test]
    fn averaged_probability_differs_from_averaged_log() {
        // p(true) = 0.9 in one subspace, 0.1 in the other.
        let s = set(vec![0.9, 0.1, 0.1, 0.9], vec![0], 2, 2);
        let mean_prob = cross_entropy(&s, CrossEntropyMode::MeanProbability).unwrap();
        let mean_log = cross_entropy(&s, CrossEntropyMode::MeanOfSubspaces).unwrap();
        assert!((mean_prob - (-(0.5f64).ln())).abs() < 1e-12);
        assert!((mean_log - (-(0.9f64.ln() + 0.1f64.ln()) / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn discriminative_loss_examples() {
        let one = init_ensemble(4, 3, 2, 1, 0).unwrap();
        assert_eq!(discriminative_loss(&one, false).unwrap(), 0.0);

        let mut two = init_ensemble(4, 3, 2, 2, 0).unwrap();
        let w0 = two.head_weight(0).clone();
        let slot = two.head_weight_slot(1);
        *two.params_mut().param_mut(slot) = w0;
        assert!((discriminative_loss(&two, false).unwrap() - 1.0).abs() < 1e-12);

        let mut ortho = two.clone();
        let mut a = Matrix::zeros(2, 3);
        a[(0, 0)] = 1.0;
        let mut b = Matrix::zeros(2, 3);
        b[(1, 2)] = -2.0;
        let (s0, s1) = (ortho.head_weight_slot(0), ortho.head_weight_slot(1));
        *ortho.params_mut().param_mut(s0) = a;
        *ortho.params_mut().param_mut(s1) = b;
        assert_eq!(discriminative_loss(&ortho, false).unwrap(), 0.0);

        let mut zero = two.clone();
        zero.params_mut().param_mut(s0).fill(0.0);
        assert!(matches!(
            discriminative_loss(&zero, false),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn discriminative_loss_is_bounded_by_pair_count() {
        let m = crate::model::SubspaceEnsemble::init(
            EnsembleConfig {
                input_dim: 3,
                hidden_dim: 2,
                output_dim: 1,
                subspaces: 6,
                ..EnsembleConfig::default()
            },
            4,
        )
        .unwrap();
        let l = discriminative_loss(&m, false).unwrap();
        assert!(l.abs() <= 15.0);
        // With bias included the norm grows but bias is zero at init.
        assert_eq!(discriminative_loss(&m, true).unwrap(), l);
        let c = mean_abs_head_cosine(&m).unwrap();
        assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        for mode in [CrossEntropyMode::MeanProbability, CrossEntropyMode::MeanOfSubspaces] {
            // Build from distances so probabilities are consistent softmaxes.
            let distances = [0.3, 1.2, 0.7, 2.0, 0.1, 0.9, 1.5, 0.4, 0.8, 1.1, 0.2, 0.6];
            let make = |d: &[f64]| {
                let mut probs = Vec::new();
                for row in d.chunks(3) {
                    probs.extend(crate::model::class_probabilities(row).unwrap());
                }
                set(probs, vec![2, 0], 2, 3)
            };
            let g = cross_entropy_grad(&make(&distances), mode, 1.0).unwrap();
            let eps = 1e-6;
            for i in 0..distances.len() {
                let mut up = distances;
                let mut dn = distances;
                up[i] += eps;
                dn[i] -= eps;
                let num = (cross_entropy(&make(&up), mode).unwrap()
                    - cross_entropy(&make(&dn), mode).unwrap())
                    / (2.0 * eps);
                assert!((num - g[i]).abs() < 1e-8, "{mode:?} {i}");
            }
        }
    }
}
