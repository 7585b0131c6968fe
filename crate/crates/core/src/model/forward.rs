//! Prototype classification inside each subspace: support means, Euclidean
//! distances to them, and a softmax over negated distances.

use crate::data::{Episode, LabeledFeature};
use crate::error::{shape_err, Error, Result};
use crate::numeric::{l2_distance, l2_distance_grad, log_softmax, Matrix};

use super::{Mode, SubspaceEmbedding};

/// Scoring variants that change which prototypes support points see.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Score each support point against an own-class prototype that excludes
    /// the point itself.
    pub leave_one_out: bool,
}

/// Distances and probabilities for a set of scored points, laid out as
/// `[point][subspace][class]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    subspaces: usize,
    n_way: usize,
    labels: Vec<usize>,
    distances: Vec<f64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl ScoredSet {
    fn new(points: usize, subspaces: usize, n_way: usize, labels: Vec<usize>) -> Self {
        let n = points * subspaces * n_way;
        Self {
            subspaces,
            n_way,
            labels,
            distances: vec![0.0; n],
            probs: vec![0.0; n],
            log_probs: vec![0.0; n],
        }
    }

    /// Builds a set directly from probability rows laid out
    /// `[point][subspace][class]`. Distances are recorded as `−ln p`, which
    /// reproduces the rows up to rounding.
    pub fn from_probabilities(
        subspaces: usize,
        n_way: usize,
        labels: Vec<usize>,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if subspaces == 0 || n_way == 0 || probs.len() != labels.len() * subspaces * n_way {
            return Err(shape_err(format!(
                "{} probabilities for {} points × {subspaces} subspaces × {n_way} classes",
                probs.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l >= n_way) {
            return Err(shape_err("label outside class range"));
        }
        let log_probs: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        Ok(Self {
            subspaces,
            n_way,
            labels,
            distances: log_probs.iter().map(|l| -l).collect(),
            probs,
            log_probs,
        })
    }

    pub(crate) fn offset(&self, point: usize, subspace: usize) -> usize {
        (point * self.subspaces + subspace) * self.n_way
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subspaces(&self) -> usize {
        self.subspaces
    }

    pub fn n_way(&self) -> usize {
        self.n_way
    }

    /// True local class of each point.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `R_j(q, ν)` for all classes `j`.
    pub fn distances(&self, point: usize, subspace: usize) -> &[f64] {
        let o = self.offset(point, subspace);
        &self.distances[o..o + self.n_way]
    }

    /// `S_j(ν)` for all classes `j`.
    pub fn probs(&self, point: usize, subspace: usize) -> &[f64] {
        let o = self.offset(point, subspace);
        &self.probs[o..o + self.n_way]
    }

    pub fn log_probs(&self, point: usize, subspace: usize) -> &[f64] {
        let o = self.offset(point, subspace);
        &self.log_probs[o..o + self.n_way]
    }

    fn fill(&mut self, point: usize, subspace: usize, distances: &[f64]) -> Result<()> {
        let o = self.offset(point, subspace);
        let logp = negated_log_softmax(distances)?;
        for j in 0..self.n_way {
            self.distances[o + j] = distances[j];
            self.log_probs[o + j] = logp[j];
            self.probs[o + j] = logp[j].exp();
        }
        Ok(())
    }
}

/// Everything the episode forward computes.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeForward {
    /// One `N × M` matrix of class prototypes per subspace.
    pub prototypes: Vec<Matrix>,
    /// Support points per local class.
    pub class_counts: Vec<usize>,
    pub query: ScoredSet,
    /// Support points scored against the prototypes.
    pub support: ScoredSet,
}

impl EpisodeForward {
    pub fn subspaces(&self) -> usize {
        self.prototypes.len()
    }

    pub fn n_way(&self) -> usize {
        self.class_counts.len()
    }
}

/// `S_j = exp(−R_j) / Σ_k exp(−R_k)`.
pub fn class_probabilities(distances: &[f64]) -> Result<Vec<f64>> {
    Ok(negated_log_softmax(distances)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

fn negated_log_softmax(distances: &[f64]) -> Result<Vec<f64>> {
    let neg: Vec<f64> = distances.iter().map(|d| -d).collect();
    log_softmax(&neg)
}

/// Class means of the embedded support points in one subspace, in the order
/// of `classes`, together with the per-class counts.
pub fn class_prototypes<E: SubspaceEmbedding + ?Sized>(
    embedder: &E,
    support: &[LabeledFeature],
    classes: &[usize],
    subspace: usize,
    mode: Mode,
) -> Result<(Matrix, Vec<usize>)> {
    if support.is_empty() {
        return Err(Error::Degenerate("empty support set".into()));
    }
    check_subspace(embedder, subspace)?;
    let x = stack(support)?;
    let emb = embedder.embed_batch(&x, mode)?;
    let labels = support
        .iter()
        .map(|s| {
            classes
                .iter()
                .position(|&c| c == s.label)
                .ok_or_else(|| shape_err(format!("support label {} not in class list", s.label)))
        })
        .collect::<Result<Vec<_>>>()?;
    prototypes_from_embeddings(&emb[subspace], &labels, classes.len())
}

/// `‖E(q) − λ_j‖₂` for every prototype row `λ_j`.
pub fn query_distances<E: SubspaceEmbedding + ?Sized>(
    embedder: &E,
    prototypes: &Matrix,
    query: &[f64],
    subspace: usize,
    mode: Mode,
) -> Result<Vec<f64>> {
    check_subspace(embedder, subspace)?;
    let emb = embedder.embed_batch(&Matrix::row_vector(query), mode)?;
    distances_to(emb[subspace].row(0), prototypes)
}

fn check_subspace<E: SubspaceEmbedding + ?Sized>(embedder: &E, subspace: usize) -> Result<()> {
    if subspace >= embedder.subspaces() {
        return Err(shape_err(format!(
            "subspace {subspace} out of range for {} subspaces",
            embedder.subspaces()
        )));
    }
    Ok(())
}

fn distances_to(point: &[f64], prototypes: &Matrix) -> Result<Vec<f64>> {
    (0..prototypes.rows())
        .map(|j| l2_distance(point, prototypes.row(j)))
        .collect()
}

/// Row-wise class means given local labels `0..n_way`.
pub(crate) fn prototypes_from_embeddings(
    embeddings: &Matrix,
    labels: &[usize],
    n_way: usize,
) -> Result<(Matrix, Vec<usize>)> {
    let mut sums = Matrix::zeros(n_way, embeddings.cols());
    let mut counts = vec![0usize; n_way];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(embeddings.row(i)) {
            *s += v;
        }
    }
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Degenerate(format!("class {j} has no support points")));
    }
    for (j, &c) in counts.iter().enumerate() {
        sums.row_mut(j).iter_mut().for_each(|s| *s /= c as f64);
    }
    Ok((sums, counts))
}

pub(crate) fn stack(items: &[LabeledFeature]) -> Result<Matrix> {
    Matrix::from_rows(&items.iter().map(|i| i.features.as_slice()).collect::<Vec<_>>())
}

/// Stacks support then query features of an episode into one batch.
pub(crate) fn episode_batch(episode: &Episode) -> Result<Matrix> {
    let rows: Vec<&[f64]> = episode
        .support
        .iter()
        .chain(&episode.query)
        .map(|i| i.features.as_slice())
        .collect();
    Matrix::from_rows(&rows)
}

/// Runs prototypes, distances and probabilities for every
/// (point, subspace, class) triple of an episode.
pub fn ensemble_forward<E: SubspaceEmbedding + ?Sized>(
    embedder: &E,
    episode: &Episode,
    mode: Mode,
) -> Result<EpisodeForward> {
    ensemble_forward_with(embedder, episode, mode, ForwardOptions::default())
}

pub fn ensemble_forward_with<E: SubspaceEmbedding + ?Sized>(
    embedder: &E,
    episode: &Episode,
    mode: Mode,
    options: ForwardOptions,
) -> Result<EpisodeForward> {
    let embeddings = embedder.embed_batch(&episode_batch(episode)?, mode)?;
    score_embeddings(
        &embeddings,
        &episode.support_labels(),
        &episode.query_labels(),
        episode.n_way,
        options,
    )
}

/// Scores pre-computed embeddings. Rows `0..support_labels.len()` of every
/// matrix are support points; the remaining rows are queries.
pub(crate) fn score_embeddings(
    embeddings: &[Matrix],
    support_labels: &[usize],
    query_labels: &[usize],
    n_way: usize,
    options: ForwardOptions,
) -> Result<EpisodeForward> {
    let n_support = support_labels.len();
    let subspaces = embeddings.len();
    let mut prototypes = Vec::with_capacity(subspaces);
    let mut class_counts = Vec::new();
    let mut query = ScoredSet::new(query_labels.len(), subspaces, n_way, query_labels.to_vec());
    let mut support = ScoredSet::new(n_support, subspaces, n_way, support_labels.to_vec());
    for (v, emb) in embeddings.iter().enumerate() {
        if emb.rows() != n_support + query_labels.len() {
            return Err(shape_err("embedding batch does not match episode size"));
        }
        let support_rows = Matrix::from_rows(&(0..n_support).map(|i| emb.row(i)).collect::<Vec<_>>())?;
        let (protos, counts) = prototypes_from_embeddings(&support_rows, support_labels, n_way)?;
        for (q, _) in query_labels.iter().enumerate() {
            let d = distances_to(emb.row(n_support + q), &protos)?;
            query.fill(q, v, &d)?;
        }
        for (i, &own) in support_labels.iter().enumerate() {
            let mut d = distances_to(emb.row(i), &protos)?;
            if options.leave_one_out {
                let c = counts[own] as f64;
                if counts[own] < 2 {
                    return Err(Error::Degenerate(
                        "leave-one-out scoring needs at least two support points per class".into(),
                    ));
                }
                let loo: Vec<f64> = protos
                    .row(own)
                    .iter()
                    .zip(emb.row(i))
                    .map(|(p, e)| (c * p - e) / (c - 1.0))
                    .collect();
                d[own] = l2_distance(emb.row(i), &loo)?;
            }
            support.fill(i, v, &d)?;
        }
        prototypes.push(protos);
        class_counts = counts;
    }
    Ok(EpisodeForward {
        prototypes,
        class_counts,
        query,
        support,
    })
}

/// Pulls gradients with respect to the distances back to the embeddings.
///
/// `grad_support[i][v][j]` and `grad_query[q][v][j]` follow the
/// [`ScoredSet`] layout (flattened). The result has one matrix per subspace
/// shaped like the embedding batch.
pub(crate) fn distances_backward(
    embeddings: &[Matrix],
    forward: &EpisodeForward,
    grad_support: &[f64],
    grad_query: &[f64],
    options: ForwardOptions,
) -> Result<Vec<Matrix>> {
    let n_support = forward.support.len();
    let n_way = forward.n_way();
    let labels = forward.support.labels();
    let mut out = Vec::with_capacity(embeddings.len());
    for (v, emb) in embeddings.iter().enumerate() {
        let protos = &forward.prototypes[v];
        let mut d_emb = Matrix::zeros(emb.rows(), emb.cols());
        let mut d_proto = Matrix::zeros(n_way, emb.cols());
        let mut pull = |point_row: usize, offset: usize, grads: &[f64], loo_own: Option<usize>| -> Result<()> {
            for j in 0..n_way {
                let g = grads[offset + j];
                if g == 0.0 {
                    continue;
                }
                if loo_own == Some(j) {
                    // Prototype excluding this point: mean of the other members.
                    let c = forward.class_counts[j] as f64;
                    let loo: Vec<f64> = protos
                        .row(j)
                        .iter()
                        .zip(emb.row(point_row))
                        .map(|(p, e)| (c * p - e) / (c - 1.0))
                        .collect();
                    let (_, dir) = l2_distance_grad(emb.row(point_row), &loo)?;
                    for (o, dv) in d_emb.row_mut(point_row).iter_mut().zip(&dir) {
                        *o += g * dv;
                    }
                    for (m, &lm) in labels.iter().enumerate() {
                        if lm == j && m != point_row {
                            for (o, dv) in d_emb.row_mut(m).iter_mut().zip(&dir) {
                                *o -= g * dv / (c - 1.0);
                            }
                        }
                    }
                } else {
                    let (_, dir) = l2_distance_grad(emb.row(point_row), protos.row(j))?;
                    for (o, dv) in d_emb.row_mut(point_row).iter_mut().zip(&dir) {
                        *o += g * dv;
                    }
                    for (o, dv) in d_proto.row_mut(j).iter_mut().zip(&dir) {
                        *o -= g * dv;
                    }
                }
            }
            Ok(())
        };
        for i in 0..n_support {
            let own = options.leave_one_out.then(|| labels[i]);
            pull(i, forward.support.offset(i, v), grad_support, own)?;
        }
        for q in 0..forward.query.len() {
            pull(n_support + q, forward.query.offset(q, v), grad_query, None)?;
        }
        for (i, &l) in labels.iter().enumerate() {
            let c = forward.class_counts[l] as f64;
            let src = d_proto.row(l).to_vec();
            for (o, p) in d_emb.row_mut(i).iter_mut().zip(&src) {
                *o += p / c;
            }
        }
        out.push(d_emb);
    }
    Ok(out)
}
