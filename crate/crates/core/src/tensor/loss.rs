use super::Tensor;
use crate::error::{Error, Result};

/// Batch-mean categorical cross-entropy together with its logit gradient.
#[derive(Debug, Clone)]
pub struct CrossEntropy {
    pub loss: f64,
    /// `(softmax − onehot) / B`
    pub grad: Tensor,
    pub probs: Tensor,
}

/// Row-wise max-subtracted softmax of `[B, C]` logits.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let [_, c] = logits.dims::<2>("softmax")?;
    let mut probs = logits.clone();
    for row in probs.data_mut().chunks_exact_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(probs)
}

pub fn softmax_crossentropy(logits: &Tensor, targets: &[usize]) -> Result<CrossEntropy> {
    let [b, c] = logits.dims::<2>("softmax_crossentropy")?;
    if targets.len() != b {
        return Err(Error::shape("softmax_crossentropy targets", b, targets.len()));
    }
    if b == 0 {
        return Err(Error::invalid("cross-entropy over an empty batch"));
    }
    if let Some(bad) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::invalid(format!("target class {bad} outside [0, {c})")));
    }
    let probs = softmax_rows(logits)?;
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (s, (lrow, grow)) in logits.data().chunks_exact(c).zip(grad.data_mut().chunks_exact_mut(c)).enumerate() {
        let max = lrow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lrow.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - lrow[targets[s]];
        grow[targets[s]] -= 1.0;
        grow.iter_mut().for_each(|g| *g /= b as f64);
    }
    Ok(CrossEntropy { loss: loss / b as f64, grad, probs })
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape("mse", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(Error::invalid("mse over an empty batch"));
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    #[test]
    fn confident_logits_give_near_zero_loss() {
        let logits = Tensor::new(vec![1, 3], vec![50.0, 0.0, 0.0]).unwrap();
        let ce = softmax_crossentropy(&logits, &[0]).unwrap();
        assert!(ce.loss < 1e-20);
    }

    #[test]
    fn uniform_binary_is_ln2() {
        let logits = Tensor::new(vec![2, 2], vec![0.3, 0.3, -1.0, -1.0]).unwrap();
        let ce = softmax_crossentropy(&logits, &[1, 0]).unwrap();
        assert!((ce.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_targets() {
        let logits = Tensor::zeros(vec![1, 2]);
        assert!(softmax_crossentropy(&logits, &[2]).is_err());
        assert!(softmax_crossentropy(&logits, &[0, 1]).is_err());
        assert!(mse_loss(&[], &[]).is_err());
    }

    #[test]
    fn huge_logits_stay_finite() {
        let logits = Tensor::new(vec![1, 2], vec![1e300, -1e300]).unwrap();
        let ce = softmax_crossentropy(&logits, &[1]).unwrap();
        assert!(ce.probs.all_finite());
        assert!(ce.grad.all_finite());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits: Vec<f64> = vec![0.3, -1.2, 2.0, 0.1, 0.5, 1.1, -0.7, 0.0, 0.2, -2.0];
        let targets = [2, 4];
        let f = |p: &[f64]| softmax_crossentropy(&Tensor::new(vec![2, 5], p.to_vec()).unwrap(), &targets).unwrap().loss;
        let ce = softmax_crossentropy(&Tensor::new(vec![2, 5], logits.clone()).unwrap(), &targets).unwrap();
        assert!(grad_check(f, &logits, ce.grad.data(), 1e-6).passed);
    }
}
