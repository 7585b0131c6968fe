//! The subspace embedding ensemble and per-subspace prototype scoring.

mod checkpoint;
mod ensemble;
mod forward;
mod layers;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use ensemble::{init_ensemble, EnsembleCache, SubspaceEnsemble};
pub use forward::{
    class_prototypes, class_probabilities, ensemble_forward, ensemble_forward_with,
    query_distances, EpisodeForward, ForwardOptions, ScoredSet,
};
pub use layers::RunningStats;

pub(crate) use forward::{distances_backward, episode_batch, score_embeddings};

/// Batch-norm behaviour: batch statistics while training, running
/// statistics at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Anything that maps a batch of feature rows into a fixed number of
/// subspaces.
pub trait SubspaceEmbedding {
    fn subspaces(&self) -> usize;

    /// One `rows × M` matrix per subspace.
    fn embed_batch(&self, x: &Matrix, mode: Mode) -> Result<Vec<Matrix>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub subspaces: usize,
    /// One trunk shared by all heads, or one trunk per head.
    pub shared_trunk: bool,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            input_dim: 1000,
            hidden_dim: 512,
            output_dim: 64,
            subspaces: 30,
            shared_trunk: true,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("layer dimensions must be >= 1".into()));
        }
        if self.subspaces == 0 {
            return Err(Error::Config("at least one subspace is required".into()));
        }
        if !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Config(
                "batch-norm eps must be > 0 and momentum within [0, 1]".into(),
            ));
        }
        Ok(())
    }
}
