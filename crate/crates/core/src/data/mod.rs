//! Labeled feature datasets, class splits and episode sampling.

mod episode;
mod io;
mod split;
mod synth;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use episode::{sample_episode, Episode};
pub use io::{load_features, save_features, FeatureFormat};
pub use split::{make_group_split, ClassSplit, GroupPreset, GroupSpec, NIH_CLASSES};
pub use synth::{synth_gaussian_dataset, SynthParams};

/// The seeded generator used everywhere randomness is needed.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One feature vector and its interned class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeature {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Immutable collection of equal-dimension labeled features.
///
/// Class names are interned to dense indices in lexicographic order, so the
/// same set of names always produces the same index table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    items: Vec<LabeledFeature>,
    label_names: Vec<String>,
    by_class: Vec<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset from `(label, features)` rows. Errors name the
    /// 1-based row that broke an invariant.
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Ingestion {
                line: 0,
                message: "no samples".into(),
            });
        };
        let dim = first.1.len();
        if dim == 0 {
            return Err(Error::Ingestion {
                line: 1,
                message: "zero-dimensional feature vector".into(),
            });
        }
        for (i, (_, f)) in rows.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::Ingestion {
                    line: i + 1,
                    message: format!("expected {dim} features, found {}", f.len()),
                });
            }
            if let Some(j) = f.iter().position(|v| !v.is_finite()) {
                return Err(Error::Ingestion {
                    line: i + 1,
                    message: format!("non-finite value in feature {j}"),
                });
            }
        }
        let label_names: Vec<String> = rows
            .iter()
            .map(|(l, _)| l.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut by_class = vec![Vec::new(); label_names.len()];
        let items = rows
            .into_iter()
            .enumerate()
            .map(|(i, (name, features))| {
                let label = label_names
                    .binary_search(&name)
                    .expect("label was interned above");
                by_class[label].push(i);
                LabeledFeature { features, label }
            })
            .collect();
        Ok(Self {
            dim,
            items,
            label_names,
            by_class,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[LabeledFeature] {
        &self.items
    }

    pub fn class_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn label_name(&self, class: usize) -> &str {
        &self.label_names[class]
    }

    /// Item indices belonging to `class`.
    pub fn class_items(&self, class: usize) -> &[usize] {
        &self.by_class[class]
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.label_names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    /// Resolves class names to indices, failing on the first unknown name.
    pub fn class_indices<'a, I>(&self, names: I) -> Result<Vec<usize>>
    where
        I: IntoIterator<Item = &'a String>,
    {
        names
            .into_iter()
            .map(|n| {
                self.class_index(n)
                    .ok_or_else(|| Error::Split(format!("class `{n}` not present in dataset")))
            })
            .collect()
    }
}
