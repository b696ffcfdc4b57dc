//! Losses and probability transforms.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Row-wise softmax, stabilized by subtracting each row's max.
pub fn softmax_probs(logits: &Tensor) -> Result<Tensor> {
    logits.check_finite("softmax input")?;
    let mut out = logits.clone();
    let cols = out.cols();
    for r in 0..out.rows() {
        softmax_row_in_place(&mut out.row_mut(r)[..cols]);
    }
    Ok(out)
}

fn softmax_row_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Vector-Jacobian product of a softmax row: given probabilities `p` and an
/// upstream gradient `u` on the probabilities, writes the gradient on the
/// logits into `out`:  `out_i = p_i * (u_i - sum_j u_j p_j)`.
pub fn softmax_vjp_row(probs: &[f64], upstream: &[f64], out: &mut [f64]) {
    debug_assert_eq!(probs.len(), upstream.len());
    debug_assert_eq!(probs.len(), out.len());
    let dot: f64 = probs.iter().zip(upstream).map(|(p, u)| p * u).sum();
    for ((o, p), u) in out.iter_mut().zip(probs).zip(upstream) {
        *o = p * (u - dot);
    }
}

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<usize> {
    if logits.shape().len() != 2 || logits.rows() != labels.len() {
        return Err(Error::shape(format!(
            "logits shape {:?} does not match {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let c = logits.cols();
    if let Some(l) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!("label {l} outside 0..{c}")));
    }
    Ok(c)
}

/// Mean negative log-probability of the true class.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let n = labels.len();
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    Ok(total / n as f64)
}

/// Gradient of [`cross_entropy_loss`] with respect to the logits:
/// `(softmax - onehot) / n`.
pub fn cross_entropy_grad(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    check_labels(logits, labels)?;
    let n = labels.len();
    let inv_n = 1.0 / n as f64;
    let mut grad = softmax_probs(logits)?;
    for (r, &label) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v *= inv_n;
        }
    }
    Ok(grad)
}

/// Fraction of rows whose argmax equals the label (first maximum wins ties).
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(r, &label)| argmax(logits.row(r)) == label)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Binary cross-entropy of `sigmoid(score)` against a 0/1 target, evaluated
/// without forming the sigmoid (softplus form). Returns `(loss, d_score)`.
pub fn binary_cross_entropy_with_logit(score: f64, target: f64) -> (f64, f64) {
    let softplus = score.max(0.0) + (-score.abs()).exp().ln_1p();
    let loss = softplus - target * score;
    let sig = 1.0 / (1.0 + (-score).exp());
    (loss, sig - target)
}
