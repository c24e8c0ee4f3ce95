use crate::error::{Error, Result};

/// Softmax negative log-likelihood of one head, with dL/dlogits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::input(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Cross-entropy summed with equal weight over the branch heads.
///
/// Returns the loss and dL/dlogits per head.
pub fn cross_entropy(logits: &[Vec<f64>], label: usize) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for head in logits {
        let (l, g) = softmax_cross_entropy(head, label)?;
        total += l;
        grads.push(g);
    }
    Ok((total, grads))
}

/// `L_ce + λ·L_CdC`.
pub fn total_loss(ce: f64, cdc: f64, lambda: f64) -> f64 {
    ce + lambda * cdc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::finite_diff::{finite_diff_grad, max_relative_error};

    #[test]
    fn uniform_logits_give_log_class_count() {
        let (l, _) = cross_entropy(&[vec![0.3; 5], vec![0.3; 5], vec![0.3; 5]], 2).unwrap();
        assert!((l - 3.0 * 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_class() {
        let (l, _) = softmax_cross_entropy(&[0.0, 50.0, 0.0], 1).unwrap();
        assert!(l < 1e-9);
    }

    #[test]
    fn two_class_hand_softmax() {
        let (l, _) = softmax_cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_label() {
        assert!(matches!(softmax_cross_entropy(&[0.0, 1.0], 2), Err(Error::Input(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let z = [0.2, -1.3, 0.7, 2.1];
        let (_, g) = softmax_cross_entropy(&z, 2).unwrap();
        let fd = finite_diff_grad(|x| softmax_cross_entropy(x, 2).unwrap().0, &z, 1e-6).unwrap();
        assert!(max_relative_error(&g, &fd) < 1e-8);
    }

    #[test]
    fn total_loss_weighting() {
        assert_eq!(total_loss(1.25, 9.0, 0.0), 1.25);
        assert!((total_loss(1.0, 4.6, 0.3) - 2.38).abs() < 1e-12);
    }
}
