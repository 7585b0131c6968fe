use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{sample_episode, seeded_rng, ClassSplit, Dataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, Protocol, VoteMode};
use crate::model::{Mode, SubspaceEnsemble};

use super::objective::{episode_objective, LossConfig};
use super::optim::{Adam, AdamConfig};

/// Episodic training schedule and loss settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub episodes_per_batch: usize,
    pub protocol: Protocol,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub seed: u64,
    /// Validation episodes per epoch on the validation classes (0 disables).
    pub val_episodes: usize,
    pub val_protocol: Protocol,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            batches_per_epoch: 1000,
            episodes_per_batch: 1,
            protocol: Protocol::default(),
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
            seed: 0,
            val_episodes: 100,
            val_protocol: Protocol::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batches_per_epoch == 0 || self.episodes_per_batch == 0 {
            return Err(Error::Config(
                "epochs, batches per epoch and episodes per batch must be >= 1".into(),
            ));
        }
        let p = self.protocol;
        if p.n_way == 0 || p.k_shot == 0 || p.q_per_class == 0 {
            return Err(Error::Config("episode shape must be positive".into()));
        }
        if !self.optimizer.learning_rate.is_finite() || self.optimizer.learning_rate < 0.0 {
            return Err(Error::Config("learning rate must be finite and >= 0".into()));
        }
        if !self.loss.alpha.is_finite() || !self.loss.beta.is_finite() {
            return Err(Error::Config("loss weights must be finite".into()));
        }
        Ok(())
    }

    /// Seed of the validation episodes, independent of the training stream.
    pub fn val_seed(&self) -> u64 {
        self.seed ^ 0x9e37_79b9_7f4a_7c15
    }
}

/// Epoch-mean loss components plus validation accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_sup: f64,
    pub l_qur: f64,
    pub l_dis: f64,
    pub total: f64,
    pub val_accuracy: Option<f64>,
}

impl EpochRecord {
    /// `key=value` pairs separated by spaces.
    pub fn to_line(&self) -> String {
        let val = self
            .val_accuracy
            .map_or_else(|| "none".to_string(), |v| v.to_string());
        format!(
            "epoch={} l_sup={} l_qur={} l_dis={} total={} val_accuracy={}",
            self.epoch, self.l_sup, self.l_qur, self.l_dis, self.total, val
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let _ = writeln!(s, "{}", r.to_line());
        }
        s
    }
}

/// Fails unless `classes` can supply episodes of shape `protocol`.
pub fn check_sampleable(dataset: &Dataset, classes: &[usize], protocol: Protocol, what: &str) -> Result<()> {
    if classes.len() < protocol.n_way {
        return Err(Error::Config(format!(
            "{}-way episodes need {} {what} classes, split has {}",
            protocol.n_way,
            protocol.n_way,
            classes.len()
        )));
    }
    let need = protocol.k_shot + protocol.q_per_class;
    for &c in classes {
        let have = dataset.class_items(c).len();
        if have < need {
            return Err(Error::Sampling {
                class: dataset.label_name(c).to_string(),
                message: format!("{what} class needs {need} items per episode, has {have}"),
            });
        }
    }
    Ok(())
}

pub fn train(
    model: &mut SubspaceEnsemble,
    dataset: &Dataset,
    split: &ClassSplit,
    config: &TrainConfig,
) -> Result<TrainLog> {
    train_with_callback(model, dataset, split, config, |_, _| Ok(()))
}

/// Runs `epochs × batches_per_epoch` optimizer steps. Each step averages the
/// loss gradient over `episodes_per_batch` episodes from the training
/// classes. After every epoch the mean loss components and the validation
/// accuracy are recorded and `on_epoch` is called.
pub fn train_with_callback<F>(
    model: &mut SubspaceEnsemble,
    dataset: &Dataset,
    split: &ClassSplit,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainLog>
where
    F: FnMut(&EpochRecord, &SubspaceEnsemble) -> Result<()>,
{
    config.validate()?;
    if model.config().input_dim != dataset.dim() {
        return Err(Error::Config(format!(
            "model expects {} features, dataset has {}",
            model.config().input_dim,
            dataset.dim()
        )));
    }
    let train_classes = dataset.class_indices(&split.train_classes)?;
    let val_classes = dataset.class_indices(&split.val_classes)?;
    check_sampleable(dataset, &train_classes, config.protocol, "training")?;
    if config.val_episodes > 0 {
        check_sampleable(dataset, &val_classes, config.val_protocol, "validation")?;
    }

    let p = config.protocol;
    let mut rng = seeded_rng(config.seed);
    let mut optimizer = Adam::new(config.optimizer, model.params());
    let mut log = TrainLog::default();
    let per_episode = 1.0 / config.episodes_per_batch as f64;

    for epoch in 1..=config.epochs {
        let mut sums = [0.0f64; 4];
        for batch in 1..=config.batches_per_epoch {
            model.params_mut().zero_grads();
            let mut batch_sums = [0.0f64; 4];
            for _ in 0..config.episodes_per_batch {
                let episode =
                    sample_episode(dataset, &train_classes, p.n_way, p.k_shot, p.q_per_class, &mut rng)?;
                // Diverged parameters surface as non-finite distances inside
                // the softmax; report them as a non-finite loss.
                let obj = match episode_objective(model, &episode, Mode::Train, &config.loss, true) {
                    Err(Error::Evaluation(_)) => {
                        return Err(Error::NonFiniteLoss {
                            epoch,
                            batch,
                            l_sup: f64::NAN,
                            l_qur: f64::NAN,
                            l_dis: f64::NAN,
                        })
                    }
                    other => other?,
                };
                let b = obj.breakdown;
                if !b.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch,
                        l_sup: b.l_sup,
                        l_qur: b.l_qur,
                        l_dis: b.l_dis,
                    });
                }
                let grads = obj.grads.expect("gradients requested");
                model.params_mut().accumulate(&grads, per_episode)?;
                model.update_running_stats(&obj.cache);
                for (s, v) in batch_sums.iter_mut().zip([b.l_sup, b.l_qur, b.l_dis, b.total]) {
                    *s += v * per_episode;
                }
            }
            optimizer.step(model.params_mut());
            if !model.params().all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    l_sup: batch_sums[0],
                    l_qur: batch_sums[1],
                    l_dis: batch_sums[2],
                });
            }
            for (s, v) in sums.iter_mut().zip(batch_sums) {
                *s += v;
            }
        }
        let n = config.batches_per_epoch as f64;
        let val_accuracy = if config.val_episodes > 0 {
            let report = evaluate(
                &*model,
                dataset,
                &val_classes,
                &EvalOptions {
                    episodes: config.val_episodes,
                    protocol: config.val_protocol,
                    vote: VoteMode::Soft,
                    seed: config.val_seed(),
                    support_batches: 1,
                },
            )?;
            Some(report.mean_accuracy)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            l_sup: sums[0] / n,
            l_qur: sums[1] / n,
            l_dis: sums[2] / n,
            total: sums[3] / n,
            val_accuracy,
        };
        on_epoch(&record, model)?;
        log.records.push(record);
    }
    Ok(log)
}
