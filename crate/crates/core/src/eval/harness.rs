use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_episode, seeded_rng, Dataset, Episode, LabeledFeature};
use crate::error::{Error, Result};
use crate::model::{ensemble_forward, Mode, SubspaceEmbedding};

use super::stats::{ci_half_width, f1_scores, mean};
use super::vote::{vote, VoteMode};

/// N-way K-shot episode shape with K' queries per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_per_class: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            n_way: 3,
            k_shot: 5,
            q_per_class: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub episodes: usize,
    pub protocol: Protocol,
    pub vote: VoteMode,
    pub seed: u64,
    /// Number of query batches per episode, each scored against freshly drawn
    /// support points. `1` keeps one support set for the whole episode.
    pub support_batches: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            episodes: 600,
            protocol: Protocol::default(),
            vote: VoteMode::Soft,
            seed: 0,
            support_batches: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    pub name: String,
    pub mean: f64,
    pub half_width: f64,
    pub f1: f64,
    pub n_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub vote: VoteMode,
    pub n_episodes: usize,
    pub mean_accuracy: f64,
    pub half_width: f64,
    /// Accuracy of each episode, in sampling order.
    pub episode_accuracies: Vec<f64>,
    pub classes: Vec<ClassReport>,
}

impl EvalReport {
    /// Human-readable table, one row per class plus an overall row.
    pub fn to_table(&self) -> String {
        let p = self.protocol;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}-way {}-shot, {} queries/class, {} vote, {} episodes",
            p.n_way, p.k_shot, p.q_per_class, self.vote, self.n_episodes
        );
        let width = self
            .classes
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(0)
            .max("overall".len());
        let _ = writeln!(
            s,
            "{:<width$}  {:>16}  {:>7}  {:>8}",
            "class", "accuracy (%)", "F1", "episodes"
        );
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{:<width$}  {:>7.2} ± {:<6.2}  {:>7.4}  {:>8}",
                c.name,
                100.0 * c.mean,
                100.0 * c.half_width,
                c.f1,
                c.n_episodes
            );
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>7.2} ± {:<6.2}  {:>7}  {:>8}",
            "overall",
            100.0 * self.mean_accuracy,
            100.0 * self.half_width,
            "",
            self.n_episodes
        );
        s
    }

    /// Tab-separated records: a header, then one line per class.
    pub fn to_records(&self) -> String {
        let mut s = String::from("class\tmean\thalf_width\tf1\tn_episodes\n");
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                c.name, c.mean, c.half_width, c.f1, c.n_episodes
            );
        }
        s
    }
}

struct EpisodeOutcome {
    accuracy: f64,
    /// `(class, correct, total)` for every class in the episode.
    per_class: Vec<(usize, usize, usize)>,
    predictions: Vec<usize>,
    truths: Vec<usize>,
}

/// Scores `options.episodes` episodes drawn from `classes` and aggregates
/// per-class accuracy with 95% intervals and per-class F1.
///
/// Episodes are seeded individually from `options.seed`, so the result does
/// not depend on how many threads the surrounding rayon pool has.
pub fn evaluate<E>(
    model: &E,
    dataset: &Dataset,
    classes: &[usize],
    options: &EvalOptions,
) -> Result<EvalReport>
where
    E: SubspaceEmbedding + Sync + ?Sized,
{
    if options.episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    if options.support_batches == 0 || options.support_batches > options.protocol.q_per_class {
        return Err(Error::Config(format!(
            "support batches must be within 1..={}",
            options.protocol.q_per_class
        )));
    }
    let mut master = seeded_rng(options.seed);
    let seeds: Vec<u64> = (0..options.episodes).map(|_| master.random()).collect();
    let outcomes = seeds
        .par_iter()
        .map(|&s| score_episode(model, dataset, classes, options, s))
        .collect::<Result<Vec<_>>>()?;

    let mut class_ids: Vec<usize> = outcomes
        .iter()
        .flat_map(|o| o.per_class.iter().map(|&(c, _, _)| c))
        .collect();
    class_ids.sort_unstable();
    class_ids.dedup();

    let predictions: Vec<usize> = outcomes.iter().flat_map(|o| o.predictions.clone()).collect();
    let truths: Vec<usize> = outcomes.iter().flat_map(|o| o.truths.clone()).collect();
    let f1 = f1_scores(&predictions, &truths, &class_ids)?;

    let class_reports = class_ids
        .iter()
        .zip(f1)
        .map(|(&c, f1)| {
            let accs: Vec<f64> = outcomes
                .iter()
                .filter_map(|o| {
                    o.per_class
                        .iter()
                        .find(|&&(k, _, _)| k == c)
                        .map(|&(_, ok, total)| ok as f64 / total as f64)
                })
                .collect();
            ClassReport {
                class: c,
                name: dataset.label_name(c).to_string(),
                mean: mean(&accs),
                half_width: ci_half_width(&accs),
                f1,
                n_episodes: accs.len(),
            }
        })
        .collect();
    let episode_accuracies: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
    Ok(EvalReport {
        protocol: options.protocol,
        vote: options.vote,
        n_episodes: options.episodes,
        mean_accuracy: mean(&episode_accuracies),
        half_width: ci_half_width(&episode_accuracies),
        episode_accuracies,
        classes: class_reports,
    })
}

fn score_episode<E>(
    model: &E,
    dataset: &Dataset,
    classes: &[usize],
    options: &EvalOptions,
    seed: u64,
) -> Result<EpisodeOutcome>
where
    E: SubspaceEmbedding + ?Sized,
{
    let p = options.protocol;
    let mut rng = seeded_rng(seed);
    let episode = sample_episode(dataset, classes, p.n_way, p.k_shot, p.q_per_class, &mut rng)?;
    let mut per_class: Vec<(usize, usize, usize)> =
        episode.classes.iter().map(|&c| (c, 0, 0)).collect();
    let mut predictions = Vec::with_capacity(episode.query.len());
    let mut truths = Vec::with_capacity(episode.query.len());

    for batch in 0..options.support_batches {
        let sub = if options.support_batches == 1 {
            episode.clone()
        } else {
            support_batch_episode(dataset, &episode, batch, options.support_batches, &mut rng)?
        };
        let forward = ensemble_forward(model, &sub, Mode::Eval)?;
        for (q, item) in sub.query.iter().enumerate() {
            let predicted = sub.classes[vote(&forward, q, options.vote).label];
            let slot = sub.local_class(item.label).expect("query class is in episode");
            per_class[slot].2 += 1;
            if predicted == item.label {
                per_class[slot].1 += 1;
            }
            predictions.push(predicted);
            truths.push(item.label);
        }
    }
    let correct: usize = per_class.iter().map(|c| c.1).sum();
    Ok(EpisodeOutcome {
        accuracy: correct as f64 / truths.len() as f64,
        per_class,
        predictions,
        truths,
    })
}

/// The `batch`-th slice of an episode's queries (per class, a contiguous
/// block of positions) paired with a support set freshly drawn from the
/// class items not used as queries in this episode. Batch 0 keeps the
/// originally sampled support.
fn support_batch_episode<R: Rng>(
    dataset: &Dataset,
    episode: &Episode,
    batch: usize,
    batches: usize,
    rng: &mut R,
) -> Result<Episode> {
    let q = episode.q_per_class;
    let lo = batch * q / batches;
    let hi = (batch + 1) * q / batches;
    let mut query = Vec::new();
    let mut support = Vec::new();
    for (j, &class) in episode.classes.iter().enumerate() {
        let class_queries = &episode.query[j * q..(j + 1) * q];
        query.extend_from_slice(&class_queries[lo..hi]);
        if batch == 0 {
            support.extend_from_slice(&episode.support[j * episode.k_shot..(j + 1) * episode.k_shot]);
            continue;
        }
        let pool: Vec<&LabeledFeature> = dataset
            .class_items(class)
            .iter()
            .map(|&i| &dataset.items()[i])
            .filter(|it| !class_queries.contains(it))
            .collect();
        if pool.len() < episode.k_shot {
            return Err(Error::Sampling {
                class: dataset.label_name(class).to_string(),
                message: "not enough non-query items to redraw the support set".into(),
            });
        }
        for i in index::sample(rng, pool.len(), episode.k_shot) {
            support.push(pool[i].clone());
        }
    }
    Episode::new(episode.classes.clone(), support, query)
}
