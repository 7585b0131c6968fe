//! Final decision (hard and soft voting over subspaces) and the episodic
//! evaluation harness.

mod harness;
mod stats;
mod vote;

pub use harness::{evaluate, ClassReport, EvalOptions, EvalReport, Protocol};
pub use stats::{ci_half_width, f1_scores, mean, sample_std};
pub use vote::{
    hard_vote, hard_vote_scored, mean_probabilities, soft_vote, soft_vote_scored, vote, VoteMode,
    VoteResult,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_gaussian_dataset, SynthParams};
    use crate::model::{init_ensemble, EpisodeForward, ScoredSet};
    use crate::numeric::Matrix;

    fn forward_from(subspaces: usize, n_way: usize, probs: Vec<f64>) -> EpisodeForward {
        let set = ScoredSet::from_probabilities(subspaces, n_way, vec![0], probs).unwrap();
        EpisodeForward {
            prototypes: vec![Matrix::zeros(n_way, 1); subspaces],
            class_counts: vec![1; n_way],
            query: set.clone(),
            support: set,
        }
    }

    #[test]
    fn single_voter() {
        let f = forward_from(1, 3, vec![0.2, 0.5, 0.3]);
        assert_eq!(hard_vote(&f, 0).label, 1);
        let s = soft_vote(&f, 0);
        assert_eq!(s.mean_probs, vec![0.2, 0.5, 0.3]);
        assert_eq!(s.label, 1);
    }

    #[test]
    fn majority_and_tie_break() {
        // votes A, A, B
        let f = forward_from(3, 2, vec![0.9, 0.1, 0.6, 0.4, 0.3, 0.7]);
        let h = hard_vote(&f, 0);
        assert_eq!(h.label, 0);
        assert_eq!(h.vote_counts, vec![2, 1]);
        // votes A, B -> lowest index
        let f = forward_from(2, 2, vec![0.9, 0.1, 0.3, 0.7]);
        assert_eq!(hard_vote(&f, 0).label, 0);
        // tied probabilities inside one subspace also go low
        let f = forward_from(1, 3, vec![0.4, 0.4, 0.2]);
        assert_eq!(hard_vote(&f, 0).label, 0);
    }

    #[test]
    fn soft_vote_averages() {
        let f = forward_from(2, 2, vec![0.6, 0.4, 0.2, 0.8]);
        let s = soft_vote(&f, 0);
        assert!((s.mean_probs[0] - 0.4).abs() < 1e-15);
        assert!((s.mean_probs[1] - 0.6).abs() < 1e-15);
        assert_eq!(s.label, 1);
        let f = forward_from(3, 2, vec![0.35, 0.65, 0.35, 0.65, 0.35, 0.65]);
        let s = soft_vote(&f, 0);
        assert!((s.mean_probs[0] - 0.35).abs() < 1e-15);
        assert_eq!(s.label, hard_vote(&f, 0).label);
    }

    #[test]
    fn evaluation_at_chance_without_signal() {
        // Identical class centers: no model can beat 1/N.
        let ds = synth_gaussian_dataset(&SynthParams {
            n_classes: 6,
            per_class: 30,
            dim: 16,
            center_scale: 0.0,
            noise_sigma: 1.0,
            seed: 2,
        })
        .unwrap();
        let model = init_ensemble(16, 12, 6, 4, 8).unwrap();
        let report = evaluate(
            &model,
            &ds,
            &[0, 1, 2, 3, 4, 5],
            &EvalOptions {
                episodes: 500,
                seed: 4,
                ..EvalOptions::default()
            },
        )
        .unwrap();
        assert!((report.mean_accuracy - 1.0 / 3.0).abs() < 0.1, "{}", report.mean_accuracy);
        assert_eq!(report.classes.len(), 6);
    }

    #[test]
    fn perfectly_separated_classes_score_one() {
        let ds = synth_gaussian_dataset(&SynthParams {
            n_classes: 3,
            per_class: 25,
            dim: 8,
            center_scale: 50.0,
            noise_sigma: 0.01,
            seed: 1,
        })
        .unwrap();
        let model = init_ensemble(8, 16, 8, 3, 1).unwrap();
        for vote in [VoteMode::Soft, VoteMode::Hard] {
            let report = evaluate(
                &model,
                &ds,
                &[0, 1, 2],
                &EvalOptions {
                    episodes: 20,
                    vote,
                    ..EvalOptions::default()
                },
            )
            .unwrap();
            assert_eq!(report.mean_accuracy, 1.0);
            assert_eq!(report.half_width, 0.0);
            for c in &report.classes {
                assert_eq!((c.mean, c.half_width, c.f1, c.n_episodes), (1.0, 0.0, 1.0, 20));
            }
        }
    }

    #[test]
    fn evaluation_is_reproducible_and_supports_redrawn_support() {
        let ds = synth_gaussian_dataset(&SynthParams {
            n_classes: 4,
            per_class: 30,
            dim: 8,
            center_scale: 1.0,
            noise_sigma: 1.0,
            seed: 3,
        })
        .unwrap();
        let model = init_ensemble(8, 8, 4, 3, 2).unwrap();
        let opts = EvalOptions {
            episodes: 12,
            seed: 9,
            ..EvalOptions::default()
        };
        let a = evaluate(&model, &ds, &[0, 1, 2, 3], &opts).unwrap();
        let b = evaluate(&model, &ds, &[0, 1, 2, 3], &opts).unwrap();
        assert_eq!(a, b);
        let batched = EvalOptions {
            support_batches: 3,
            ..opts.clone()
        };
        let c = evaluate(&model, &ds, &[0, 1, 2, 3], &batched).unwrap();
        assert!((0.0..=1.0).contains(&c.mean_accuracy));
        let too_many = EvalOptions {
            support_batches: 16,
            ..opts
        };
        assert!(evaluate(&model, &ds, &[0, 1, 2, 3], &too_many).is_err());
    }
}
