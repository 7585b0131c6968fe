//! Few-shot classification with an ensemble of trainable random subspaces.
//!
//! Feature vectors pass through a shared trunk (linear + batch norm) and then
//! through `ν` independently initialized heads. Each head defines one
//! subspace in which class prototypes are support-set means and queries are
//! scored by a softmax over negative Euclidean distances. Subspace
//! probabilities are combined by voting. Training minimizes support and
//! query cross-entropy plus a pairwise-cosine penalty that pushes the head
//! weight matrices apart.
//!
//! A truncated-SVD per-class subspace classifier is included as a baseline,
//! together with a benchmark contrasting the cost of building subspaces by
//! decomposition with building them by random initialization.

pub mod data;
pub mod eval;
mod error;
pub mod model;
pub mod numeric;
pub mod svd;
pub mod train;

pub use error::{Error, Result};
