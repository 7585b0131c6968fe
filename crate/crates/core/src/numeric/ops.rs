//! Vector primitives used by the prototype classifier and the
//! discriminative penalty, each paired with its analytic gradient.

use crate::error::{shape_err, Error, Result};

use super::matrix::{dot, norm};

/// Numerically stable softmax (max-subtracted).
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    let lse = log_sum_exp(scores)?;
    Ok(scores.iter().map(|s| (s - lse).exp()).collect())
}

/// `log Σ exp(v_i)` with max subtraction.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(shape_err("log-sum-exp of an empty vector"));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite score {bad}")));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Log-probabilities of a softmax.
pub fn log_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    let lse = log_sum_exp(scores)?;
    Ok(scores.iter().map(|s| s - lse).collect())
}

/// Pulls `grad_probs` back through `probs = softmax(scores)`.
pub fn softmax_backward(probs: &[f64], grad_probs: &[f64]) -> Vec<f64> {
    let inner = dot(probs, grad_probs);
    probs
        .iter()
        .zip(grad_probs)
        .map(|(p, g)| p * (g - inner))
        .collect()
}

/// Euclidean distance `‖u − v‖₂`.
pub fn l2_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(shape_err(format!(
            "distance between vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Distance together with `∂‖u − v‖/∂u`; the gradient with respect to `v`
/// is its negation. At `u == v` the zero subgradient is returned.
pub fn l2_distance_grad(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>)> {
    let d = l2_distance(u, v)?;
    let grad = if d > 0.0 {
        u.iter().zip(v).map(|(a, b)| (a - b) / d).collect()
    } else {
        vec![0.0; u.len()]
    };
    Ok((d, grad))
}

/// `u·v / (‖u‖‖v‖)`. Zero-norm inputs are rejected.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    let (nu, nv) = checked_norms(u, v)?;
    Ok(dot(u, v) / (nu * nv))
}

/// Cosine similarity and its gradients with respect to both arguments.
pub fn cosine_similarity_grad(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (nu, nv) = checked_norms(u, v)?;
    let cos = dot(u, v) / (nu * nv);
    let gu = u
        .iter()
        .zip(v)
        .map(|(a, b)| b / (nu * nv) - cos * a / (nu * nu))
        .collect();
    let gv = u
        .iter()
        .zip(v)
        .map(|(a, b)| a / (nu * nv) - cos * b / (nv * nv))
        .collect();
    Ok((cos, gu, gv))
}

fn checked_norms(u: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    if u.len() != v.len() {
        return Err(shape_err(format!(
            "cosine between vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Degenerate(
            "cosine similarity of a zero-norm vector".into(),
        ));
    }
    Ok((nu, nv))
}
