use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The fifteen NIH chest x-ray labels (fourteen abnormalities plus
/// `No Finding`) the bundled group presets refer to.
pub const NIH_CLASSES: [&str; 15] = [
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Effusion",
    "Emphysema",
    "Fibrosis",
    "Hernia",
    "Infiltration",
    "Mass",
    "No Finding",
    "Nodule",
    "Pleural Thickening",
    "Pneumonia",
    "Pneumothorax",
];

/// Disjoint train / validation / test class sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub train_classes: BTreeSet<String>,
    pub val_classes: BTreeSet<String>,
    pub test_classes: BTreeSet<String>,
}

impl ClassSplit {
    pub fn new<S: Into<String>>(
        train: impl IntoIterator<Item = S>,
        val: impl IntoIterator<Item = S>,
        test: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let split = Self {
            train_classes: collect_unique(train, "train")?,
            val_classes: collect_unique(val, "validation")?,
            test_classes: collect_unique(test, "test")?,
        };
        split.validate()?;
        Ok(split)
    }

    fn validate(&self) -> Result<()> {
        let sets = [
            ("train", &self.train_classes),
            ("validation", &self.val_classes),
            ("test", &self.test_classes),
        ];
        for (name, set) in sets {
            if set.is_empty() {
                return Err(Error::Split(format!("{name} class set is empty")));
            }
        }
        for (i, (a_name, a)) in sets.iter().enumerate() {
            for (b_name, b) in &sets[i + 1..] {
                if let Some(shared) = a.intersection(b).next() {
                    return Err(Error::Split(format!(
                        "class `{shared}` appears in both {a_name} and {b_name} sets"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_known(&self, all_classes: &BTreeSet<&str>) -> Result<()> {
        for c in self
            .train_classes
            .iter()
            .chain(&self.val_classes)
            .chain(&self.test_classes)
        {
            if !all_classes.contains(c.as_str()) {
                return Err(Error::Split(format!("unknown class `{c}`")));
            }
        }
        Ok(())
    }
}

fn collect_unique<S: Into<String>>(
    items: impl IntoIterator<Item = S>,
    which: &str,
) -> Result<BTreeSet<String>> {
    let mut set = BTreeSet::new();
    for item in items {
        let item = item.into();
        if !set.insert(item.clone()) {
            return Err(Error::Split(format!(
                "class `{item}` listed twice in {which} set"
            )));
        }
    }
    Ok(set)
}

/// The five NIH group configurations (three test, three validation and nine
/// training classes each; test sets do not overlap across groups).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupPreset {
    Group1,
    Group2,
    Group3,
    Group4,
    Group5,
}

impl GroupPreset {
    pub const ALL: [GroupPreset; 5] = [
        GroupPreset::Group1,
        GroupPreset::Group2,
        GroupPreset::Group3,
        GroupPreset::Group4,
        GroupPreset::Group5,
    ];

    /// `(train, validation, test)` class names.
    pub fn classes(self) -> ([&'static str; 9], [&'static str; 3], [&'static str; 3]) {
        match self {
            GroupPreset::Group1 => (
                [
                    "Mass",
                    "Edema",
                    "Cardiomegaly",
                    "Effusion",
                    "Infiltration",
                    "Nodule",
                    "Emphysema",
                    "No Finding",
                    "Pneumothorax",
                ],
                ["Atelectasis", "Consolidation", "Pleural Thickening"],
                ["Hernia", "Pneumonia", "Fibrosis"],
            ),
            GroupPreset::Group2 => (
                [
                    "Effusion",
                    "Consolidation",
                    "Edema",
                    "Cardiomegaly",
                    "No Finding",
                    "Atelectasis",
                    "Infiltration",
                    "Emphysema",
                    "Pneumothorax",
                ],
                ["Fibrosis", "Hernia", "Pneumonia"],
                ["Mass", "Nodule", "Pleural Thickening"],
            ),
            GroupPreset::Group3 => (
                [
                    "Pneumothorax",
                    "Consolidation",
                    "Hernia",
                    "No Finding",
                    "Atelectasis",
                    "Infiltration",
                    "Effusion",
                    "Pneumonia",
                    "Fibrosis",
                ],
                ["Mass", "Nodule", "Pleural Thickening"],
                ["Emphysema", "Edema", "Cardiomegaly"],
            ),
            GroupPreset::Group4 => (
                [
                    "Infiltration",
                    "Hernia",
                    "Fibrosis",
                    "No Finding",
                    "Atelectasis",
                    "Nodule",
                    "Mass",
                    "Pneumonia",
                    "Pleural Thickening",
                ],
                ["Emphysema", "Edema", "Cardiomegaly"],
                ["Consolidation", "Effusion", "Pneumothorax"],
            ),
            GroupPreset::Group5 => (
                [
                    "Hernia",
                    "Fibrosis",
                    "Pneumonia",
                    "Pleural Thickening",
                    "Nodule",
                    "Mass",
                    "Emphysema",
                    "Edema",
                    "Cardiomegaly",
                ],
                ["Consolidation", "Effusion", "Pneumothorax"],
                ["Infiltration", "Atelectasis", "No Finding"],
            ),
        }
    }
}

impl FromStr for GroupPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "group1" => Ok(Self::Group1),
            "group2" => Ok(Self::Group2),
            "group3" => Ok(Self::Group3),
            "group4" => Ok(Self::Group4),
            "group5" => Ok(Self::Group5),
            other => Err(Error::Split(format!("unknown group preset `{other}`"))),
        }
    }
}

impl fmt::Display for GroupPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = GroupPreset::ALL.iter().position(|g| g == self).unwrap() + 1;
        write!(f, "group{n}")
    }
}

/// How to carve a class list into a [`ClassSplit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupSpec {
    Preset(GroupPreset),
    Explicit {
        train: Vec<String>,
        val: Vec<String>,
        test: Vec<String>,
    },
    /// First `train` classes in sorted order, then `val`, then `test`.
    Counts { train: usize, val: usize, test: usize },
}

pub fn make_group_split<S: AsRef<str>>(all_classes: &[S], spec: &GroupSpec) -> Result<ClassSplit> {
    let known: BTreeSet<&str> = all_classes.iter().map(AsRef::as_ref).collect();
    let split = match spec {
        GroupSpec::Preset(preset) => {
            let (train, val, test) = preset.classes();
            ClassSplit::new(train, val, test)?
        }
        GroupSpec::Explicit { train, val, test } => {
            ClassSplit::new(train.clone(), val.clone(), test.clone())?
        }
        GroupSpec::Counts { train, val, test } => {
            let needed = train + val + test;
            if needed > known.len() {
                return Err(Error::Split(format!(
                    "{needed} classes requested but only {} available",
                    known.len()
                )));
            }
            let sorted: Vec<&str> = known.iter().copied().collect();
            ClassSplit::new(
                sorted[..*train].iter().copied(),
                sorted[*train..train + val].iter().copied(),
                sorted[train + val..needed].iter().copied(),
            )?
        }
    };
    split.check_known(&known)?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn group1_preset() {
        let s = make_group_split(&NIH_CLASSES, &GroupSpec::Preset(GroupPreset::Group1)).unwrap();
        assert_eq!(s.test_classes, set(&["Hernia", "Pneumonia", "Fibrosis"]));
        assert_eq!(
            s.val_classes,
            set(&["Atelectasis", "Consolidation", "Pleural Thickening"])
        );
        assert_eq!(s.train_classes.len(), 9);
    }

    #[test]
    fn group5_preset() {
        let s = make_group_split(&NIH_CLASSES, &GroupSpec::Preset(GroupPreset::Group5)).unwrap();
        assert_eq!(
            s.test_classes,
            set(&["Infiltration", "Atelectasis", "No Finding"])
        );
    }

    #[test]
    fn presets_cover_every_class_and_test_sets_are_disjoint() {
        let mut tested = BTreeSet::new();
        for g in GroupPreset::ALL {
            let s = make_group_split(&NIH_CLASSES, &GroupSpec::Preset(g)).unwrap();
            let all: BTreeSet<_> = s
                .train_classes
                .iter()
                .chain(&s.val_classes)
                .chain(&s.test_classes)
                .cloned()
                .collect();
            assert_eq!(all.len(), 15, "{g}");
            for t in &s.test_classes {
                assert!(tested.insert(t.clone()), "{t} tested twice");
            }
        }
        assert_eq!(tested.len(), 15);
    }

    #[test]
    fn overlapping_lists_are_rejected() {
        let spec = GroupSpec::Explicit {
            train: vec!["a".into(), "b".into()],
            val: vec!["c".into()],
            test: vec!["b".into()],
        };
        assert!(matches!(
            make_group_split(&["a", "b", "c"], &spec),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn unknown_and_empty_classes_are_rejected() {
        let spec = GroupSpec::Explicit {
            train: vec!["a".into()],
            val: vec!["b".into()],
            test: vec!["zzz".into()],
        };
        assert!(make_group_split(&["a", "b", "c"], &spec).is_err());
        assert!(make_group_split(&["a", "b"], &GroupSpec::Preset(GroupPreset::Group2)).is_err());
        let spec = GroupSpec::Explicit {
            train: vec!["a".into()],
            val: vec![],
            test: vec!["c".into()],
        };
        assert!(make_group_split(&["a", "b", "c"], &spec).is_err());
    }

    #[test]
    fn count_split_uses_sorted_order() {
        let s = make_group_split(
            &["d", "a", "c", "b", "e"],
            &GroupSpec::Counts {
                train: 2,
                val: 1,
                test: 2,
            },
        )
        .unwrap();
        assert_eq!(s.train_classes, set(&["a", "b"]));
        assert_eq!(s.val_classes, set(&["c"]));
        assert_eq!(s.test_classes, set(&["d", "e"]));
        assert!(make_group_split(
            &["a"],
            &GroupSpec::Counts {
                train: 1,
                val: 1,
                test: 1
            }
        )
        .is_err());
    }

    #[test]
    fn preset_names_round_trip() {
        for g in GroupPreset::ALL {
            assert_eq!(g.to_string().parse::<GroupPreset>().unwrap(), g);
        }
    }
}
