use crate::error::{shape_err, Error, Result};

use super::matrix::Matrix;

/// Trainable tensors in declaration order, each paired with a gradient
/// buffer of the same shape.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamTape {
    names: Vec<String>,
    params: Vec<Matrix>,
    grads: Vec<Matrix>,
}

impl ParamTape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its slot index.
    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        let (r, c) = value.shape();
        self.names.push(name.into());
        self.params.push(value);
        self.grads.push(Matrix::zeros(r, c));
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(Matrix::len).sum()
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn param(&self, slot: usize) -> &Matrix {
        &self.params[slot]
    }

    pub fn param_mut(&mut self, slot: usize) -> &mut Matrix {
        &mut self.params[slot]
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn grad(&self, slot: usize) -> &Matrix {
        &self.grads[slot]
    }

    pub fn grads(&self) -> &[Matrix] {
        &self.grads
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    /// Adds `scale · update[i]` into gradient slot `i` for every slot.
    pub fn accumulate(&mut self, update: &[Matrix], scale: f64) -> Result<()> {
        if update.len() != self.grads.len() {
            return Err(shape_err(format!(
                "{} gradient tensors for {} parameters",
                update.len(),
                self.grads.len()
            )));
        }
        for (g, u) in self.grads.iter_mut().zip(update) {
            g.add_scaled(u, scale)?;
        }
        Ok(())
    }

    /// Zero-filled tensors shaped like the parameters.
    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(Matrix::is_finite)
    }

    /// Parameters and gradients, borrowed together for in-place updates.
    pub fn params_and_grads_mut(&mut self) -> impl Iterator<Item = (&mut Matrix, &Matrix)> {
        self.params.iter_mut().zip(self.grads.iter())
    }
}

/// Central-difference gradient of `f` at `params`, one coordinate at a time.
pub fn fd_gradient<F>(mut f: F, params: &ParamTape, eps: f64) -> Result<Vec<Matrix>>
where
    F: FnMut(&ParamTape) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("finite-difference step {eps} must be > 0")));
    }
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    for slot in 0..params.len() {
        for idx in 0..params.param(slot).len() {
            let original = params.param(slot).as_slice()[idx];
            probe.param_mut(slot).as_mut_slice()[idx] = original + eps;
            let plus = f(&probe)?;
            probe.param_mut(slot).as_mut_slice()[idx] = original - eps;
            let minus = f(&probe)?;
            probe.param_mut(slot).as_mut_slice()[idx] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Evaluation(format!(
                    "non-finite objective while probing {}[{idx}]",
                    params.name(slot)
                )));
            }
            out[slot].as_mut_slice()[idx] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(out)
}
