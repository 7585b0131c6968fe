use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EpisodeForward, ScoredSet};

/// How per-subspace predictions are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteMode {
    /// Each subspace votes for its most probable class; majority wins.
    Hard,
    /// Subspace probabilities are averaged; the most probable class wins.
    Soft,
}

impl FromStr for VoteMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hard" => Ok(Self::Hard),
            "soft" => Ok(Self::Soft),
            other => Err(Error::Config(format!("unknown vote mode `{other}`"))),
        }
    }
}

impl fmt::Display for VoteMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VoteMode::Hard => "hard",
            VoteMode::Soft => "soft",
        })
    }
}

/// Outcome of combining the subspaces for one point. `vote_counts` is only
/// filled by hard voting and `mean_probs` only by soft voting.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteResult {
    pub label: usize,
    pub vote_counts: Vec<usize>,
    pub mean_probs: Vec<f64>,
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn hard_vote_scored(set: &ScoredSet, point: usize) -> VoteResult {
    let mut counts = vec![0usize; set.n_way()];
    for v in 0..set.subspaces() {
        counts[argmax(set.probs(point, v))] += 1;
    }
    let mut label = 0;
    for (j, &c) in counts.iter().enumerate() {
        if c > counts[label] {
            label = j;
        }
    }
    VoteResult {
        label,
        vote_counts: counts,
        mean_probs: Vec::new(),
    }
}

pub fn soft_vote_scored(set: &ScoredSet, point: usize) -> VoteResult {
    let mean_probs = mean_probabilities(set, point);
    VoteResult {
        label: argmax(&mean_probs),
        vote_counts: Vec::new(),
        mean_probs,
    }
}

/// `p̄_j = (1/ν) Σ_ν S_j(ν)`.
pub fn mean_probabilities(set: &ScoredSet, point: usize) -> Vec<f64> {
    let nu = set.subspaces();
    let mut mean = vec![0.0; set.n_way()];
    for v in 0..nu {
        for (m, p) in mean.iter_mut().zip(set.probs(point, v)) {
            *m += p;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nu as f64);
    mean
}

/// Majority vote over subspaces for query `query_index`; ties resolve to the
/// lowest class index.
pub fn hard_vote(forward: &EpisodeForward, query_index: usize) -> VoteResult {
    hard_vote_scored(&forward.query, query_index)
}

/// Argmax of the subspace-averaged probabilities for query `query_index`.
pub fn soft_vote(forward: &EpisodeForward, query_index: usize) -> VoteResult {
    soft_vote_scored(&forward.query, query_index)
}

pub fn vote(forward: &EpisodeForward, query_index: usize, mode: VoteMode) -> VoteResult {
    match mode {
        VoteMode::Hard => hard_vote(forward, query_index),
        VoteMode::Soft => soft_vote(forward, query_index),
    }
}
