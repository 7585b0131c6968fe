use rsem::data::{
    load_features, make_group_split, save_features, synth_gaussian_dataset, FeatureFormat,
    GroupSpec, SynthParams,
};
use rsem::eval::{evaluate, EvalOptions, VoteMode};
use rsem::model::{load_checkpoint, save_checkpoint, EnsembleConfig, SubspaceEnsemble};
use rsem::train::{train, TrainConfig};

fn dataset() -> rsem::data::Dataset {
    synth_gaussian_dataset(&SynthParams {
        n_classes: 9,
        per_class: 25,
        dim: 12,
        center_scale: 2.0,
        noise_sigma: 1.0,
        seed: 17,
    })
    .unwrap()
}

#[test]
fn feature_files_round_trip_in_both_formats() {
    let ds = dataset();
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("d.csv", FeatureFormat::Csv), ("d.fslf", FeatureFormat::Binary)] {
        let path = dir.path().join(name);
        save_features(&ds, &path, format).unwrap();
        let back = load_features(&path, FeatureFormat::from_path(&path)).unwrap();
        assert_eq!(back.label_names(), ds.label_names());
        assert_eq!(back.len(), ds.len());
        for (a, b) in back.items().iter().zip(ds.items()) {
            assert_eq!(a.label, b.label);
            // binary stores f32
            for (x, y) in a.features.iter().zip(&b.features) {
                assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0));
            }
        }
    }
}

#[test]
fn trained_checkpoint_evaluates_identically_after_reload() {
    let ds = dataset();
    let split = make_group_split(ds.label_names(), &GroupSpec::Counts { train: 3, val: 3, test: 3 }).unwrap();
    let mut model = SubspaceEnsemble::init(
        EnsembleConfig {
            input_dim: 12,
            hidden_dim: 16,
            output_dim: 6,
            subspaces: 5,
            shared_trunk: false,
            ..EnsembleConfig::default()
        },
        1,
    )
    .unwrap();
    let log = train(
        &mut model,
        &ds,
        &split,
        &TrainConfig {
            epochs: 2,
            batches_per_epoch: 40,
            val_episodes: 10,
            seed: 2,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert_eq!(log.records.len(), 2);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.fslm");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.params().params(), model.params().params());

    let test = ds.class_indices(&split.test_classes).unwrap();
    for vote in [VoteMode::Soft, VoteMode::Hard] {
        let opts = EvalOptions {
            episodes: 30,
            vote,
            seed: 5,
            ..EvalOptions::default()
        };
        let a = evaluate(&model, &ds, &test, &opts).unwrap();
        let b = evaluate(&loaded, &ds, &test, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.classes.len(), 3);
        assert!(a.mean_accuracy > 1.0 / 3.0, "{}", a.mean_accuracy);
    }
}
