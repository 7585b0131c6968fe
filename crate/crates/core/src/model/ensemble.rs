use rand::Rng;

use crate::data::seeded_rng;
use crate::error::{shape_err, Error, Result};
use crate::numeric::{Matrix, ParamTape};

use super::layers::{block_backward, block_forward, BlockCache, BlockSlots, RunningStats};
use super::{EnsembleConfig, Mode, SubspaceEmbedding};

/// Shared trunk (`D → H`, linear + batch norm) feeding `ν` heads
/// (`H → M`, linear + batch norm), one per subspace.
///
/// With `shared_trunk == false` every head gets its own trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEnsemble {
    config: EnsembleConfig,
    tape: ParamTape,
    trunks: Vec<BlockSlots>,
    heads: Vec<BlockSlots>,
    trunk_stats: Vec<RunningStats>,
    head_stats: Vec<RunningStats>,
}

/// Intermediate values of one batch forward, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct EnsembleCache {
    trunks: Vec<BlockCache>,
    heads: Vec<BlockCache>,
}

/// Builds an ensemble with the default trunk layout and normalization
/// constants.
pub fn init_ensemble(
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    subspaces: usize,
    seed: u64,
) -> Result<SubspaceEnsemble> {
    SubspaceEnsemble::init(
        EnsembleConfig {
            input_dim,
            hidden_dim,
            output_dim,
            subspaces,
            ..EnsembleConfig::default()
        },
        seed,
    )
}

impl SubspaceEnsemble {
    /// Weights are drawn i.i.d. from `U(−1/√fan_in, 1/√fan_in)`; biases and
    /// batch-norm shifts start at zero, scales at one. Nothing here looks at
    /// data, so the cost depends only on the layer sizes.
    pub fn init(config: EnsembleConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed);
        let mut tape = ParamTape::new();
        let mut block = |tape: &mut ParamTape, name: String, fan_in: usize, fan_out: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            BlockSlots {
                weight: tape.push(
                    format!("{name}.weight"),
                    Matrix::from_vec(fan_out, fan_in, w).expect("sized above"),
                ),
                bias: tape.push(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
                gamma: tape.push(format!("{name}.bn.gamma"), Matrix::filled(1, fan_out, 1.0)),
                beta: tape.push(format!("{name}.bn.beta"), Matrix::zeros(1, fan_out)),
            }
        };
        let trunk_count = if config.shared_trunk {
            1
        } else {
            config.subspaces
        };
        let trunks = (0..trunk_count)
            .map(|t| block(&mut tape, format!("trunk{t}"), config.input_dim, config.hidden_dim))
            .collect();
        let heads = (0..config.subspaces)
            .map(|v| block(&mut tape, format!("head{v}"), config.hidden_dim, config.output_dim))
            .collect();
        Ok(Self {
            trunk_stats: vec![RunningStats::new(config.hidden_dim); trunk_count],
            head_stats: vec![RunningStats::new(config.output_dim); config.subspaces],
            config,
            tape,
            trunks,
            heads,
        })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamTape {
        &self.tape
    }

    pub fn params_mut(&mut self) -> &mut ParamTape {
        &mut self.tape
    }

    /// Replaces every parameter tensor; shapes must match the current ones.
    pub fn set_params(&mut self, tape: ParamTape) -> Result<()> {
        if tape.len() != self.tape.len()
            || tape
                .params()
                .iter()
                .zip(self.tape.params())
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(shape_err("parameter tape layout does not match the ensemble"));
        }
        if !tape.all_finite() {
            return Err(Error::Degenerate("non-finite parameter".into()));
        }
        self.tape = tape;
        Ok(())
    }

    pub fn trunk_count(&self) -> usize {
        self.trunks.len()
    }

    fn trunk_of(&self, head: usize) -> usize {
        if self.config.shared_trunk {
            0
        } else {
            head
        }
    }

    /// Tape slot of head `v`'s weight matrix (`M × H`).
    pub fn head_weight_slot(&self, head: usize) -> usize {
        self.heads[head].weight
    }

    pub fn head_bias_slot(&self, head: usize) -> usize {
        self.heads[head].bias
    }

    pub fn head_weight(&self, head: usize) -> &Matrix {
        self.tape.param(self.heads[head].weight)
    }

    /// Running statistics of every batch-norm layer: trunks first, then heads.
    pub fn running_stats(&self) -> impl Iterator<Item = &RunningStats> {
        self.trunk_stats.iter().chain(&self.head_stats)
    }

    pub fn running_stats_mut(&mut self) -> impl Iterator<Item = &mut RunningStats> {
        self.trunk_stats.iter_mut().chain(self.head_stats.iter_mut())
    }

    /// Embeds every row of `x` into every subspace.
    pub fn forward_batch(&self, x: &Matrix, mode: Mode) -> Result<(Vec<Matrix>, EnsembleCache)> {
        if x.cols() != self.config.input_dim {
            return Err(shape_err(format!(
                "input has {} features, ensemble expects {}",
                x.cols(),
                self.config.input_dim
            )));
        }
        if x.rows() == 0 {
            return Err(shape_err("empty batch"));
        }
        let eps = self.config.bn_eps;
        let mut trunk_out = Vec::with_capacity(self.trunks.len());
        let mut trunk_caches = Vec::with_capacity(self.trunks.len());
        for (slots, stats) in self.trunks.iter().zip(&self.trunk_stats) {
            let (y, cache) = block_forward(&self.tape, *slots, x, mode, stats, eps)?;
            trunk_out.push(y);
            trunk_caches.push(cache);
        }
        let mut embeddings = Vec::with_capacity(self.heads.len());
        let mut head_caches = Vec::with_capacity(self.heads.len());
        for (v, (slots, stats)) in self.heads.iter().zip(&self.head_stats).enumerate() {
            let input = &trunk_out[self.trunk_of(v)];
            let (y, cache) = block_forward(&self.tape, *slots, input, mode, stats, eps)?;
            embeddings.push(y);
            head_caches.push(cache);
        }
        Ok((
            embeddings,
            EnsembleCache {
                trunks: trunk_caches,
                heads: head_caches,
            },
        ))
    }

    /// Gradient of a scalar objective with respect to every parameter, given
    /// its gradient with respect to each subspace's embedding batch.
    pub fn backward_batch(
        &self,
        cache: &EnsembleCache,
        grad_embeddings: &[Matrix],
    ) -> Result<Vec<Matrix>> {
        if grad_embeddings.len() != self.heads.len() {
            return Err(shape_err(format!(
                "{} embedding gradients for {} subspaces",
                grad_embeddings.len(),
                self.heads.len()
            )));
        }
        let mut grads = self.tape.zeros_like();
        let rows = cache.trunks[0].xhat.rows();
        let mut d_trunk_out: Vec<Matrix> = (0..self.trunks.len())
            .map(|_| Matrix::zeros(rows, self.config.hidden_dim))
            .collect();
        for (v, (slots, head_cache)) in self.heads.iter().zip(&cache.heads).enumerate() {
            let g = block_backward(&self.tape, *slots, head_cache, &grad_embeddings[v])?;
            d_trunk_out[self.trunk_of(v)].add_scaled(&g.input, 1.0)?;
            store(&mut grads, *slots, g.weight, g.bias, g.gamma, g.beta);
        }
        for ((slots, trunk_cache), d_out) in self.trunks.iter().zip(&cache.trunks).zip(&d_trunk_out) {
            let g = block_backward(&self.tape, *slots, trunk_cache, d_out)?;
            store(&mut grads, *slots, g.weight, g.bias, g.gamma, g.beta);
        }
        Ok(grads)
    }

    /// Folds the batch statistics of a train-mode forward into the running
    /// statistics.
    pub fn update_running_stats(&mut self, cache: &EnsembleCache) {
        let momentum = self.config.bn_momentum;
        for (stats, c) in self.trunk_stats.iter_mut().zip(&cache.trunks) {
            if c.mode == Mode::Train {
                stats.update(c, momentum);
            }
        }
        for (stats, c) in self.head_stats.iter_mut().zip(&cache.heads) {
            if c.mode == Mode::Train {
                stats.update(c, momentum);
            }
        }
    }

    /// Embedding of one feature vector in subspace `subspace`.
    ///
    /// In train mode a lone vector is its own batch, so this is mostly
    /// useful in eval mode.
    pub fn embed(&self, x: &[f64], subspace: usize, mode: Mode) -> Result<Vec<f64>> {
        if subspace >= self.heads.len() {
            return Err(shape_err(format!(
                "subspace {subspace} out of range for {} heads",
                self.heads.len()
            )));
        }
        let (emb, _) = self.forward_batch(&Matrix::row_vector(x), mode)?;
        Ok(emb[subspace].row(0).to_vec())
    }
}

fn store(
    grads: &mut [Matrix],
    slots: BlockSlots,
    weight: Matrix,
    bias: Matrix,
    gamma: Matrix,
    beta: Matrix,
) {
    grads[slots.weight] = weight;
    grads[slots.bias] = bias;
    grads[slots.gamma] = gamma;
    grads[slots.beta] = beta;
}

impl SubspaceEmbedding for SubspaceEnsemble {
    fn subspaces(&self) -> usize {
        self.config.subspaces
    }

    fn embed_batch(&self, x: &Matrix, mode: Mode) -> Result<Vec<Matrix>> {
        self.forward_batch(x, mode).map(|(e, _)| e)
    }
}
