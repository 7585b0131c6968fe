//! Loss terms, the Adam optimizer, gradient checking and the episodic
//! training loop.

mod gradcheck;
mod loss;
mod objective;
mod optim;
mod trainer;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use loss::{
    cross_entropy, discriminative_loss, mean_abs_head_cosine, query_loss, support_loss,
    total_loss, CrossEntropyMode, LossBreakdown,
};
pub use objective::{episode_objective, EpisodeObjective, LossConfig};
pub use optim::{Adam, AdamConfig};
pub use trainer::{
    check_sampleable, train, train_with_callback, EpochRecord, TrainConfig, TrainLog,
};
