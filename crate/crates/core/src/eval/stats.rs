use crate::error::{shape_err, Result};

/// Normal-approximation 95% half-width `1.96 · s / √n`, with `s` the sample
/// (n − 1) standard deviation. Fewer than two values give zero.
pub fn ci_half_width(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    1.96 * sample_std(values) / (n as f64).sqrt()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Per-class F1 in the order of `classes`. A class with no true positives,
/// false positives or false negatives scores 0.
pub fn f1_scores(predictions: &[usize], truths: &[usize], classes: &[usize]) -> Result<Vec<f64>> {
    if predictions.len() != truths.len() {
        return Err(shape_err(format!(
            "{} predictions for {} ground-truth labels",
            predictions.len(),
            truths.len()
        )));
    }
    Ok(classes
        .iter()
        .map(|&c| {
            let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
            for (&p, &t) in predictions.iter().zip(truths) {
                match (p == c, t == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fnn += 1,
                    (false, false) => {}
                }
            }
            // 2PR/(P+R) reduces to 2TP/(2TP+FP+FN), which avoids rounding in P and R.
            if tp == 0 {
                0.0
            } else {
                (2 * tp) as f64 / (2 * tp + fp + fnn) as f64
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_interval() {
        assert_eq!(ci_half_width(&[1.0, 1.0, 1.0]), 0.0);
        assert_eq!(ci_half_width(&[0.7]), 0.0);
    }

    #[test]
    fn two_point_interval() {
        // s = √0.5, n = 2
        let hw = ci_half_width(&[1.0, 0.0]);
        assert!((hw - 1.96 * 0.5f64.sqrt() / 2f64.sqrt()).abs() < 1e-15);
        assert!((hw - 0.98).abs() < 1e-12);
        assert_eq!(mean(&[1.0, 0.0]), 0.5);
    }

    #[test]
    fn f1_examples() {
        let f = f1_scores(&[0, 1, 1, 2], &[0, 1, 1, 2], &[0, 1, 2]).unwrap();
        assert_eq!(f, vec![1.0, 1.0, 1.0]);
        let f = f1_scores(&[0, 1, 1, 1], &[0, 0, 1, 1], &[0, 1, 9]).unwrap();
        assert_eq!(f[0], 2.0 / 3.0);
        assert_eq!(f[1], 0.8);
        assert_eq!(f[2], 0.0);
        assert!(f1_scores(&[0], &[], &[0]).is_err());
    }
}
