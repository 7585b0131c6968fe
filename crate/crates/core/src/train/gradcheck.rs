use serde::{Deserialize, Serialize};

use crate::data::Episode;
use crate::error::{Error, Result};
use crate::model::{Mode, SubspaceEnsemble};
use crate::numeric::fd_gradient;

use super::objective::{episode_objective, LossConfig};

/// Largest disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub mode: Mode,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub n_params: usize,
    /// L2 norm of the β-scaled cosine-penalty gradient.
    pub dis_grad_norm: f64,
}

/// `|a − n| / max(|a|, |n|)`, or the absolute difference when both are
/// below 1e-8.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Compares the backpropagated gradient of the episode loss with central
/// differences over every parameter.
pub fn gradient_check(
    model: &SubspaceEnsemble,
    episode: &Episode,
    config: &LossConfig,
    mode: Mode,
    eps: f64,
) -> Result<GradCheckReport> {
    let obj = episode_objective(model, episode, mode, config, true)?;
    let analytic = obj.grads.expect("gradients requested");
    let dis_grad_norm = obj
        .dis_grads
        .expect("gradients requested")
        .iter()
        .map(|g| g.norm().powi(2))
        .sum::<f64>()
        .sqrt();

    let mut probe = model.clone();
    let numeric = fd_gradient(
        |tape| {
            *probe.params_mut() = tape.clone();
            Ok(episode_objective(&probe, episode, mode, config, false)?.breakdown.total)
        },
        model.params(),
        eps,
    )?;

    let tape = model.params();
    let mut report = GradCheckReport {
        mode,
        max_rel_error: 0.0,
        worst_param: tape.name(0).to_string(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        n_params: tape.scalar_count(),
        dis_grad_norm,
    };
    for slot in 0..tape.len() {
        for (i, (&a, &n)) in analytic[slot]
            .as_slice()
            .iter()
            .zip(numeric[slot].as_slice())
            .enumerate()
        {
            if !a.is_finite() {
                return Err(Error::Evaluation(format!(
                    "non-finite analytic gradient at {}[{i}]",
                    tape.name(slot)
                )));
            }
            let err = relative_error(a, n);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = tape.name(slot).to_string();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = n;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_episode, seeded_rng, synth_gaussian_dataset, SynthParams};
    use crate::model::init_ensemble;

    fn tiny() -> (SubspaceEnsemble, Episode) {
        let ds = synth_gaussian_dataset(&SynthParams {
            n_classes: 4,
            per_class: 10,
            dim: 16,
            center_scale: 1.0,
            noise_sigma: 1.0,
            seed: 5,
        })
        .unwrap();
        let model = init_ensemble(16, 8, 4, 3, 11).unwrap();
        let mut rng = seeded_rng(3);
        let episode = sample_episode(&ds, &[0, 1, 2, 3], 3, 2, 2, &mut rng).unwrap();
        (model, episode)
    }

    #[test]
    fn relative_error_switches_to_absolute_near_zero() {
        assert!((relative_error(1e-10, 3e-10) - 2e-10).abs() < 1e-24);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
    }

    #[test]
    fn gradients_match_in_both_modes() {
        let (model, episode) = tiny();
        let config = LossConfig::default();
        let eval = gradient_check(&model, &episode, &config, Mode::Eval, 1e-5).unwrap();
        assert!(eval.max_rel_error <= 1e-4, "{eval:?}");
        let train = gradient_check(&model, &episode, &config, Mode::Train, 1e-5).unwrap();
        assert!(train.max_rel_error <= 1e-3, "{train:?}");
        assert!(eval.dis_grad_norm > 0.0);
    }

    #[test]
    fn gradients_match_for_loss_variants() {
        let (model, episode) = tiny();
        for config in [
            LossConfig {
                leave_one_out: true,
                dis_include_bias: true,
                ..LossConfig::default()
            },
            LossConfig {
                support_loss: false,
                alpha: 0.5,
                beta: 2.0,
                cross_entropy: super::super::CrossEntropyMode::MeanOfSubspaces,
                ..LossConfig::default()
            },
        ] {
            let r = gradient_check(&model, &episode, &config, Mode::Eval, 1e-5).unwrap();
            assert!(r.max_rel_error <= 1e-4, "{config:?}: {r:?}");
        }
    }
}
