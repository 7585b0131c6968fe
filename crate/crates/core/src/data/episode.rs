use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

use super::{Dataset, LabeledFeature};

/// One N-way K-shot task.
///
/// `classes[j]` is the dataset class index of local class `j`. Support and
/// query lists are class-major: all items of local class 0 first, then 1, ...
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support: Vec<LabeledFeature>,
    pub query: Vec<LabeledFeature>,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_per_class: usize,
    pub classes: Vec<usize>,
}

impl Episode {
    /// Assembles an episode from explicit items, checking that every class
    /// in `classes` has the same number of support items and of query items.
    pub fn new(
        classes: Vec<usize>,
        support: Vec<LabeledFeature>,
        query: Vec<LabeledFeature>,
    ) -> Result<Self> {
        let n_way = classes.len();
        if n_way == 0 {
            return Err(Error::Config("episode needs at least one class".into()));
        }
        if classes.iter().collect::<BTreeSet<_>>().len() != n_way {
            return Err(Error::Config("episode classes must be distinct".into()));
        }
        let count = |items: &[LabeledFeature], which: &str| -> Result<usize> {
            let mut per = vec![0usize; n_way];
            for it in items {
                let j = classes.iter().position(|&c| c == it.label).ok_or_else(|| {
                    Error::Config(format!("{which} item has label {} outside episode", it.label))
                })?;
                per[j] += 1;
            }
            if per.iter().any(|&c| c != per[0]) {
                return Err(Error::Config(format!(
                    "{which} set is unbalanced across classes: {per:?}"
                )));
            }
            Ok(per[0])
        };
        let k_shot = count(&support, "support")?;
        let q_per_class = count(&query, "query")?;
        if k_shot == 0 {
            return Err(Error::Degenerate("episode has an empty support set".into()));
        }
        Ok(Self {
            support,
            query,
            n_way,
            k_shot,
            q_per_class,
            classes,
        })
    }

    /// Local index of a dataset class, if it is part of the episode.
    pub fn local_class(&self, class: usize) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }

    pub fn support_labels(&self) -> Vec<usize> {
        self.local_labels(&self.support)
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.local_labels(&self.query)
    }

    fn local_labels(&self, items: &[LabeledFeature]) -> Vec<usize> {
        items
            .iter()
            .map(|it| self.local_class(it.label).expect("item outside episode"))
            .collect()
    }
}

/// Draws `n_way` classes from `classes` and, per class, `k_shot + q_per_class`
/// distinct items: the first `k_shot` go to the support set, the rest to the
/// query set. Fully determined by the generator state.
pub fn sample_episode<R: Rng + ?Sized>(
    dataset: &Dataset,
    classes: &[usize],
    n_way: usize,
    k_shot: usize,
    q_per_class: usize,
    rng: &mut R,
) -> Result<Episode> {
    if n_way == 0 || k_shot == 0 || q_per_class == 0 {
        return Err(Error::Config(format!(
            "episode shape must be positive, got N={n_way} K={k_shot} K'={q_per_class}"
        )));
    }
    let pool: Vec<usize> = classes
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if pool.len() < n_way {
        return Err(Error::Config(format!(
            "{n_way}-way episodes need {n_way} classes, only {} available",
            pool.len()
        )));
    }
    let per_class = k_shot + q_per_class;
    for &c in &pool {
        if c >= dataset.class_count() {
            return Err(Error::Sampling {
                class: c.to_string(),
                message: "class index outside dataset".into(),
            });
        }
        let have = dataset.class_items(c).len();
        if have < per_class {
            return Err(Error::Sampling {
                class: dataset.label_name(c).to_string(),
                message: format!("needs {per_class} items, has {have}"),
            });
        }
    }

    let chosen: Vec<usize> = index::sample(rng, pool.len(), n_way)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let mut support = Vec::with_capacity(n_way * k_shot);
    let mut query = Vec::with_capacity(n_way * q_per_class);
    for &c in &chosen {
        let items = dataset.class_items(c);
        let picks = index::sample(rng, items.len(), per_class);
        for (n, i) in picks.into_iter().enumerate() {
            let item = dataset.items()[items[i]].clone();
            if n < k_shot {
                support.push(item);
            } else {
                query.push(item);
            }
        }
    }
    Ok(Episode {
        support,
        query,
        n_way,
        k_shot,
        q_per_class,
        classes: chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{seeded_rng, synth_gaussian_dataset, SynthParams};
    use proptest::prelude::*;

    fn toy(n_classes: usize, per_class: usize) -> Dataset {
        // Features encode (class, item) so identity checks are trivial.
        let mut rows = Vec::new();
        for c in 0..n_classes {
            for i in 0..per_class {
                rows.push((format!("c{c:02}"), vec![c as f64, i as f64]));
            }
        }
        Dataset::from_rows(rows).unwrap()
    }

    #[test]
    fn three_way_five_shot_sizes() {
        let ds = toy(5, 20);
        let classes: Vec<usize> = (0..5).collect();
        let ep = sample_episode(&ds, &classes, 3, 5, 15, &mut seeded_rng(1)).unwrap();
        assert_eq!(ep.support.len(), 15);
        assert_eq!(ep.query.len(), 45);
    }

    #[test]
    fn minimal_episode_splits_two_items() {
        let ds = toy(1, 2);
        let ep = sample_episode(&ds, &[0], 1, 1, 1, &mut seeded_rng(3)).unwrap();
        assert_eq!(ep.support.len(), 1);
        assert_eq!(ep.query.len(), 1);
        assert_ne!(ep.support[0], ep.query[0]);
    }

    #[test]
    fn same_seed_same_episode() {
        let ds = toy(6, 10);
        let classes: Vec<usize> = (0..6).collect();
        let a = sample_episode(&ds, &classes, 3, 2, 3, &mut seeded_rng(9)).unwrap();
        let b = sample_episode(&ds, &classes, 3, 2, 3, &mut seeded_rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn insufficient_class_is_named() {
        let mut rows = vec![("big".to_string(), vec![0.0]); 10];
        rows.extend(vec![("tiny".to_string(), vec![1.0]); 2]);
        let ds = Dataset::from_rows(rows).unwrap();
        let err = sample_episode(&ds, &[0, 1], 2, 2, 1, &mut seeded_rng(0)).unwrap_err();
        match err {
            Error::Sampling { class, .. } => assert_eq!(class, "tiny"),
            other => panic!("unexpected {other}"),
        }
        assert!(sample_episode(&ds, &[0], 2, 1, 1, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn explicit_episode_validation() {
        let f = |l: usize| LabeledFeature {
            features: vec![0.0],
            label: l,
        };
        let ep = Episode::new(vec![4, 7], vec![f(4), f(7)], vec![f(7), f(4)]).unwrap();
        assert_eq!(ep.k_shot, 1);
        assert_eq!(ep.query_labels(), vec![1, 0]);
        assert!(Episode::new(vec![4, 7], vec![f(4), f(4)], vec![]).is_err());
        assert!(Episode::new(vec![4], vec![f(5)], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn sampled_episodes_are_well_formed(seed in any::<u64>(), n_way in 1usize..5, k in 1usize..4, q in 1usize..4) {
            let ds = synth_gaussian_dataset(&SynthParams {
                n_classes: 8, per_class: 8, dim: 3, center_scale: 1.0, noise_sigma: 1.0, seed: 5,
            }).unwrap();
            // Sample only from the odd classes.
            let allowed: Vec<usize> = (0..8).filter(|c| c % 2 == 1).collect();
            let ep = sample_episode(&ds, &allowed, n_way, k, q, &mut seeded_rng(seed)).unwrap();
            prop_assert_eq!(ep.classes.iter().collect::<BTreeSet<_>>().len(), n_way);
            for &c in &ep.classes {
                prop_assert!(allowed.contains(&c));
                prop_assert_eq!(ep.support.iter().filter(|i| i.label == c).count(), k);
                prop_assert_eq!(ep.query.iter().filter(|i| i.label == c).count(), q);
            }
            prop_assert_eq!(ep.support.len(), n_way * k);
            prop_assert_eq!(ep.query.len(), n_way * q);
            for s in &ep.support {
                prop_assert!(!ep.query.contains(s));
            }
        }
    }
}
