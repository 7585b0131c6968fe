use serde::{Deserialize, Serialize};

use crate::data::Episode;
use crate::error::Result;
use crate::model::{
    distances_backward, episode_batch, score_embeddings, EnsembleCache, EpisodeForward,
    ForwardOptions, Mode, SubspaceEnsemble,
};
use crate::numeric::Matrix;

use super::loss::{
    cross_entropy, cross_entropy_grad, discriminative_loss_grad, total_loss, CrossEntropyMode,
    LossBreakdown,
};

/// Which loss terms are active and how they are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    /// When false the support cross-entropy is neither computed nor
    /// optimized and is reported as 0.
    pub support_loss: bool,
    pub cross_entropy: CrossEntropyMode,
    pub leave_one_out: bool,
    /// Include head biases in the vectors compared by the cosine penalty.
    pub dis_include_bias: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            support_loss: true,
            cross_entropy: CrossEntropyMode::MeanProbability,
            leave_one_out: false,
            dis_include_bias: false,
        }
    }
}

/// Loss of one episode, with gradients when requested.
pub struct EpisodeObjective {
    pub breakdown: LossBreakdown,
    pub forward: EpisodeForward,
    /// Gradient of the total loss, aligned with the parameter tape.
    pub grads: Option<Vec<Matrix>>,
    /// The `β·∇L_dis` part of `grads`.
    pub dis_grads: Option<Vec<Matrix>>,
    pub cache: EnsembleCache,
}

pub fn episode_objective(
    model: &SubspaceEnsemble,
    episode: &Episode,
    mode: Mode,
    config: &LossConfig,
    with_grads: bool,
) -> Result<EpisodeObjective> {
    let options = ForwardOptions {
        leave_one_out: config.leave_one_out,
    };
    let (embeddings, cache) = model.forward_batch(&episode_batch(episode)?, mode)?;
    let forward = score_embeddings(
        &embeddings,
        &episode.support_labels(),
        &episode.query_labels(),
        episode.n_way,
        options,
    )?;
    let l_qur = cross_entropy(&forward.query, config.cross_entropy)?;
    let l_sup = if config.support_loss {
        cross_entropy(&forward.support, config.cross_entropy)?
    } else {
        0.0
    };
    let (l_dis, dis) = discriminative_loss_grad(model, config.dis_include_bias)?;
    let breakdown = total_loss(l_sup, l_qur, l_dis, config.alpha, config.beta);

    let (grads, dis_grads) = if with_grads {
        let sup_scale = if config.support_loss { 1.0 } else { 0.0 };
        let g_sup = cross_entropy_grad(&forward.support, config.cross_entropy, sup_scale)?;
        let g_qur = cross_entropy_grad(&forward.query, config.cross_entropy, config.alpha)?;
        let d_emb = distances_backward(&embeddings, &forward, &g_sup, &g_qur, options)?;
        let mut grads = model.backward_batch(&cache, &d_emb)?;
        let mut dis_grads = dis;
        for (g, d) in grads.iter_mut().zip(dis_grads.iter_mut()) {
            d.scale(config.beta);
            g.add_scaled(d, 1.0)?;
        }
        (Some(grads), Some(dis_grads))
    } else {
        (None, None)
    };
    Ok(EpisodeObjective {
        breakdown,
        forward,
        grads,
        dis_grads,
        cache,
    })
}
