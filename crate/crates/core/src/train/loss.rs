use crate::autodiff::{BackwardRule, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check_labels<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(usize, usize)> {
    let &[b, k] = logits.shape() else {
        return Err(Error::Rank(format!("cross_entropy expects logits [B, K], got {:?}", logits.shape())));
    };
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for {b} rows of logits", labels.len())));
    }
    if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::Data(format!("label {l} at row {row} is outside [0, {k})")));
    }
    Ok((b, k))
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let k = *logits.shape().last().ok_or_else(|| Error::Rank("softmax of a rank-0 tensor".into()))?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Per-row `−log softmax(z)[label]` via `max + ln Σ exp(z − max) − z[label]`.
fn row_losses<T: Scalar>(logits: &Tensor<T>, labels: &[usize], k: usize) -> Vec<T> {
    logits
        .data()
        .chunks(k)
        .zip(labels)
        .map(|(row, &l)| {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            lse - row[l]
        })
        .collect()
}

/// Mean cross-entropy of `[B, K]` logits against integer labels.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let (b, k) = check_labels(logits, labels)?;
    Ok(row_losses(logits, labels, k).into_iter().sum::<T>() / T::from_usize_lossy(b))
}

struct CrossEntropyRule<T> {
    probs: Tensor<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> BackwardRule<T> for CrossEntropyRule<T> {
    fn name(&self) -> &'static str {
        "cross_entropy"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &[T]) -> Vec<Vec<T>> {
        let k = self.probs.shape()[1];
        let scale = grad_out[0] / T::from_usize_lossy(self.labels.len());
        let mut g = self.probs.data().to_vec();
        for (row, &l) in g.chunks_mut(k).zip(&self.labels) {
            row[l] -= T::one();
            row.iter_mut().for_each(|v| *v *= scale);
        }
        vec![g]
    }
}

pub fn cross_entropy_op<T: Scalar>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    let z = tape.value(logits);
    let loss = cross_entropy(z, labels)?;
    let probs = softmax_rows(z)?;
    tape.custom(&[logits], Tensor::scalar(loss), Box::new(CrossEntropyRule { probs, labels: labels.to_vec() }))
}
