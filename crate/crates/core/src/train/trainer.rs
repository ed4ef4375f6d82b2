use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{cross_entropy_op, softmax_rows};
use super::metrics::{accuracy, macro_auc, MetricsReport};
use super::optim::{Adam, TrainConfig};
use crate::error::{Error, Result};
use crate::mixer::Model;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::Tape;

/// Offset between the initialization seed and the shuffling seed.
const SHUFFLE_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Per-example flattened patches `[S, patch_dim]` with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Vec<Tensor<T>>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Data(format!("{} inputs for {} labels", inputs.len(), labels.len())));
        }
        if let Some(first) = inputs.first() {
            if let Some(i) = inputs.iter().position(|x| x.shape() != first.shape()) {
                return Err(Error::Shape(format!(
                    "example {i} has shape {:?}, example 0 {:?}",
                    inputs[i].shape(),
                    first.shape()
                )));
            }
        }
        Ok(Dataset { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stacks the selected examples into `[B, S, patch_dim]`.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let first = self.inputs.get(*indices.first().ok_or_else(|| Error::Data("empty batch".into()))?);
        let shape = first.ok_or_else(|| Error::Data("batch index out of range".into()))?.shape().to_vec();
        let mut data = Vec::with_capacity(indices.len() * shape.iter().product::<usize>());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let x = self.inputs.get(i).ok_or_else(|| Error::Data(format!("batch index {i} out of range")))?;
            data.extend_from_slice(x.data());
            labels.push(self.labels[i]);
        }
        let mut full = vec![indices.len()];
        full.extend(shape);
        Ok((Tensor::from_vec(&full, data)?, labels))
    }
}

/// One optimizer step on a batch. Returns the pre-update loss and logits.
pub fn train_step<T: Scalar>(
    model: &mut Model<T>,
    adam: &mut Adam<T>,
    x: &Tensor<T>,
    labels: &[usize],
    lr: f64,
) -> Result<(f64, Tensor<T>)> {
    let mut tape = Tape::new();
    let bind = model.params().bind(&mut tape);
    let input = tape.constant(x.clone());
    let logits = model.forward(&mut tape, &bind, input)?;
    let loss = cross_entropy_op(&mut tape, logits, labels)?;
    let loss_value = tape.value(loss).item().as_f64();
    if !loss_value.is_finite() {
        return Err(Error::NonFinite(format!("training loss at optimizer step {}", adam.steps() + 1)));
    }
    tape.backward(loss)?;
    let grads = bind.grads(&tape);
    let logits = tape.value(logits).clone();
    adam.step(model.params_mut(), &grads, lr)?;
    Ok((loss_value, logits))
}

/// Builds a report from `n × k` logits.
pub fn report_from_logits(
    logits: &[f64],
    k: usize,
    labels: &[usize],
    loss_sum: f64,
    split: &str,
    epoch: Option<usize>,
) -> Result<MetricsReport> {
    let probs = softmax_rows(&Tensor::from_vec(&[labels.len(), k], logits.to_vec())?)?;
    Ok(MetricsReport {
        epoch,
        split: split.to_string(),
        loss: loss_sum / labels.len() as f64,
        acc: accuracy(probs.data(), k, labels)?,
        auc: macro_auc(probs.data(), k, labels)?.0,
        samples: labels.len(),
        lr: None,
    })
}

/// Loss, accuracy and AUC of `model` over a whole split.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    data: &Dataset<T>,
    split: &str,
    epoch: Option<usize>,
    batch_size: usize,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::Data(format!("split `{split}` is empty")));
    }
    let k = model.config().num_classes;
    let mut logits = Vec::with_capacity(data.len() * k);
    let mut loss_sum = 0.0;
    let order: Vec<usize> = (0..data.len()).collect();
    for chunk in order.chunks(batch_size.max(1)) {
        let (x, labels) = data.batch(chunk)?;
        let z = model.predict(&x)?;
        loss_sum += super::loss::cross_entropy(&z, &labels)?.as_f64() * labels.len() as f64;
        logits.extend(z.data().iter().map(|v| v.as_f64()));
    }
    report_from_logits(&logits, k, &data.labels, loss_sum, split, epoch)
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the selected epoch.
    pub best_model: Model<T>,
    pub best_epoch: usize,
    /// Report of the selection split at the selected epoch.
    pub best_report: MetricsReport,
    pub history: Vec<MetricsReport>,
    /// Optimizer state after the final epoch.
    pub optimizer: Adam<T>,
    pub final_model: Model<T>,
}

/// Runs `cfg.epochs` epochs of shuffled minibatch Adam.
///
/// After each epoch the running training metrics and every evaluation split
/// are reported through `sink`, in order. The epoch whose `select_on` split
/// ranks best (accuracy, then AUC) is kept; `select_on` is `"train"` or the
/// name of one of `evals`.
pub fn train<T: Scalar>(
    mut model: Model<T>,
    train_set: &Dataset<T>,
    evals: &[(&str, &Dataset<T>)],
    select_on: &str,
    cfg: &TrainConfig,
    sink: &mut dyn FnMut(&MetricsReport) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if select_on != "train" && !evals.iter().any(|(n, _)| *n == select_on) {
        return Err(Error::Config(format!("selection split `{select_on}` is not evaluated")));
    }
    let k = model.config().num_classes;
    if let Some(&l) = train_set.labels.iter().find(|&&l| l >= k) {
        return Err(Error::Data(format!("label {l} but the model has {k} classes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(SHUFFLE_SEED_OFFSET));
    let mut adam = Adam::new(model.params(), cfg);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(usize, MetricsReport, Model<T>)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut logits = Vec::with_capacity(train_set.len() * k);
        let mut labels_seen = Vec::with_capacity(train_set.len());
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = train_set.batch(chunk)?;
            let (loss, z) = train_step(&mut model, &mut adam, &x, &labels, lr)?;
            loss_sum += loss * labels.len() as f64;
            logits.extend(z.data().iter().map(|v| v.as_f64()));
            labels_seen.extend(labels);
        }
        let mut train_report = report_from_logits(&logits, k, &labels_seen, loss_sum, "train", Some(epoch))?;
        train_report.lr = Some(lr);
        sink(&train_report)?;
        let mut selection = (select_on == "train").then(|| train_report.clone());
        history.push(train_report);
        for (name, data) in evals {
            let report = evaluate(&model, data, name, Some(epoch), cfg.batch_size)?;
            sink(&report)?;
            if *name == select_on {
                selection = Some(report.clone());
            }
            history.push(report);
        }
        let selection = selection.expect("selection split reported");
        if best.as_ref().is_none_or(|(_, b, _)| selection.better_than(b)) {
            best = Some((epoch, selection, model.clone()));
        }
    }
    let (best_epoch, best_report, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome { best_model, best_epoch, best_report, history, optimizer: adam, final_model: model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixer::{ModelConfig, Variant};
    use rand::Rng;

    fn tiny() -> ModelConfig {
        ModelConfig { seq_len: 8, embed_dim: 16, depth: 2, num_classes: 3, patch_dim: 4, ..Default::default() }
    }

    fn blobs(n: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let l = i % 3;
            let data = (0..32).map(|j| if j % 4 == l { 1.5 } else { 0.0 } + rng.random_range(-0.3..0.3)).collect();
            inputs.push(Tensor::from_vec(&[8, 4], data).unwrap());
            labels.push(l);
        }
        Dataset::new(inputs, labels).unwrap()
    }

    #[test]
    fn batches_stack_in_order() {
        let d = blobs(5, 1);
        let (x, l) = d.batch(&[3, 0]).unwrap();
        assert_eq!(x.shape(), &[2, 8, 4]);
        assert_eq!(&x.data()[..32], d.inputs[3].data());
        assert_eq!(l, vec![0, 0]);
        assert!(d.batch(&[9]).is_err());
    }

    #[test]
    fn empty_training_split() {
        let model = Model::<f64>::new(tiny(), 0).unwrap();
        let empty = Dataset::<f64>::new(vec![], vec![]).unwrap();
        let err = train(model, &empty, &[], "train", &TrainConfig::default(), &mut |_| Ok(())).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn learns_separable_blobs_deterministically() {
        let cfg = TrainConfig { lr0: 3e-3, epochs: 6, batch_size: 8, seed: 5, ..Default::default() };
        let train_set = blobs(48, 2);
        let test = blobs(24, 3);
        let run = || {
            let mut lines = Vec::new();
            let model = Model::<f64>::new(ModelConfig { variant: Variant::RollHermit, ..tiny() }, 5).unwrap();
            let out = train(model, &train_set, &[("test", &test)], "train", &cfg, &mut |r| {
                lines.push(serde_json::to_string(r).unwrap());
                Ok(())
            })
            .unwrap();
            (out, lines)
        };
        let (a, la) = run();
        let (_, lb) = run();
        assert_eq!(la, lb);
        assert_eq!(la.len(), 12);
        let final_test = evaluate(&a.final_model, &test, "test", None, 8).unwrap();
        assert!(final_test.acc >= 0.9, "{final_test:?}");
        assert!(a.history[0].loss > a.history[10].loss);
    }

    #[test]
    fn selection_prefers_best_epoch() {
        let cfg = TrainConfig { lr0: 3e-3, epochs: 3, batch_size: 16, ..Default::default() };
        let d = blobs(24, 4);
        let model = Model::<f64>::new(tiny(), 1).unwrap();
        let out = train(model, &d, &[("val", &d)], "val", &cfg, &mut |_| Ok(())).unwrap();
        let vals: Vec<&MetricsReport> = out.history.iter().filter(|r| r.split == "val").collect();
        assert!(vals.iter().all(|r| !r.better_than(&out.best_report)));
        let again = evaluate(&out.best_model, &d, "val", None, 16).unwrap();
        assert_eq!(again.acc, out.best_report.acc);
    }
}
