//! File-level workflows: train, evaluate, infer and cross-validate from a
//! manifest, writing checkpoints and metrics streams under an output
//! directory.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{EffectiveConfig, RunConfig};
use crate::error::{Error, Result};
use crate::frontend::{Frontend, Manifest, ManifestRow, MelSpec, Normalizer, Split};
use crate::mixer::Model;
use crate::scalar::{DType, Scalar};
use crate::train::{
    evaluate, read_checkpoint_header, softmax_rows, train, Checkpoint, Dataset, MetricsReport, TrainState,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LAST_CHECKPOINT_FILE: &str = "last.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective-config.json";
pub const SUMMARY_FILE: &str = "summary.json";

const EVAL_BATCH: usize = 64;

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn log_mels(frontend: &Frontend, rows: &[&ManifestRow]) -> Result<Vec<MelSpec>> {
    rows.iter().map(|r| frontend.log_mel_file(&r.resolved)).collect()
}

fn dataset<T: Scalar>(frontend: &Frontend, mels: &[MelSpec], rows: &[&ManifestRow], norm: &Normalizer) -> Result<Dataset<T>> {
    let inputs = mels.iter().map(|m| frontend.patches(m, norm)).collect::<Result<Vec<_>>>()?;
    Dataset::new(inputs, rows.iter().map(|r| r.label).collect())
}

/// Writes each report as one JSON line to `metrics.jsonl` and to `echo`.
struct MetricsSink<'a> {
    file: File,
    path: PathBuf,
    echo: &'a mut dyn FnMut(&str),
}

impl<'a> MetricsSink<'a> {
    fn create(path: PathBuf, echo: &'a mut dyn FnMut(&str)) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(MetricsSink { file, path, echo })
    }

    fn emit(&mut self, report: &MetricsReport) -> Result<()> {
        let line = serde_json::to_string(report).expect("serializable");
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        (self.echo)(&line);
        Ok(())
    }
}

/// Outcome of [`run_train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    /// Selection-split report at the best epoch.
    pub selected: MetricsReport,
    /// Test-split report of the saved model, when a test split exists.
    pub test: Option<MetricsReport>,
}

/// Trains on the manifest's `train` split, selecting on `val` when present
/// (otherwise on running training metrics), and evaluates `test` each epoch.
///
/// Writes `effective-config.json`, `metrics.jsonl`, `checkpoint.bin` (best
/// epoch) and `last.bin` (final epoch with optimizer moments) under `out`.
pub fn run_train(cfg: &RunConfig, manifest: &Manifest, out: &Path, echo: &mut dyn FnMut(&str)) -> Result<TrainSummary> {
    match cfg.train.dtype {
        DType::F32 => run_train_typed::<f32>(cfg, manifest, out, echo),
        DType::F64 => run_train_typed::<f64>(cfg, manifest, out, echo),
    }
}

fn run_train_typed<T: Scalar>(
    cfg: &RunConfig,
    manifest: &Manifest,
    out: &Path,
    echo: &mut dyn FnMut(&str),
) -> Result<TrainSummary> {
    let eff = cfg.resolve(manifest.num_classes())?;
    let rows = |s| manifest.rows_in(s).collect::<Vec<_>>();
    let (train_rows, val_rows, test_rows) = (rows(Split::Train), rows(Split::Val), rows(Split::Test));
    if train_rows.is_empty() {
        return Err(Error::Data("manifest has no `train` rows".into()));
    }
    create_dir(out)?;
    write_json(&out.join(EFFECTIVE_CONFIG_FILE), &eff)?;

    let frontend = Frontend::new(eff.frontend.clone())?;
    let train_mels = log_mels(&frontend, &train_rows)?;
    let norm = Normalizer::fit(&train_mels)?;
    let train_set = dataset::<T>(&frontend, &train_mels, &train_rows, &norm)?;
    let val_set = dataset::<T>(&frontend, &log_mels(&frontend, &val_rows)?, &val_rows, &norm)?;
    let test_set = dataset::<T>(&frontend, &log_mels(&frontend, &test_rows)?, &test_rows, &norm)?;

    let mut evals = Vec::new();
    if !val_set.is_empty() {
        evals.push(("val", &val_set));
    }
    if !test_set.is_empty() {
        evals.push(("test", &test_set));
    }
    let select_on = if val_set.is_empty() { "train" } else { "val" };

    let model = Model::<T>::new(eff.model.clone(), eff.train.seed)?;
    let mut sink = MetricsSink::create(out.join(METRICS_FILE), echo)?;
    let outcome = train(model, &train_set, &evals, select_on, &eff.train, &mut |r| sink.emit(r))?;

    let steps_per_epoch = train_set.len().div_ceil(eff.train.batch_size) as u64;
    let mut best = Checkpoint::new(&outcome.best_model, &eff.frontend, norm);
    best.header.train_state =
        Some(TrainState { epoch: outcome.best_epoch, step: steps_per_epoch * (outcome.best_epoch as u64 + 1) });
    best.save(out.join(CHECKPOINT_FILE))?;
    let mut last = Checkpoint::new(&outcome.final_model, &eff.frontend, norm);
    last.header.train_state = Some(TrainState { epoch: eff.train.epochs - 1, step: outcome.optimizer.steps() });
    last.extra = outcome.optimizer.export(outcome.final_model.params());
    last.save(out.join(LAST_CHECKPOINT_FILE))?;

    let test = if test_set.is_empty() {
        None
    } else {
        Some(evaluate(&outcome.best_model, &test_set, "test", Some(outcome.best_epoch), EVAL_BATCH)?)
    };
    Ok(TrainSummary { best_epoch: outcome.best_epoch, selected: outcome.best_report, test })
}

fn features_for<T: Scalar>(ck: &Checkpoint<T>, rows: &[&ManifestRow]) -> Result<(Model<T>, Dataset<T>)> {
    let model = ck.model()?;
    let frontend = Frontend::new(ck.header.frontend.clone())?;
    let k = model.config().num_classes;
    if let Some(r) = rows.iter().find(|r| r.label >= k) {
        return Err(Error::Data(format!("{}: label {} but the checkpoint has {k} classes", r.path, r.label)));
    }
    let mels = log_mels(&frontend, rows)?;
    let data = dataset(&frontend, &mels, rows, &ck.header.normalizer)?;
    Ok((model, data))
}

/// Evaluates a saved checkpoint on one split of a manifest.
pub fn run_eval(checkpoint: &Path, manifest: &Manifest, split: Split) -> Result<MetricsReport> {
    fn typed<T: Scalar>(checkpoint: &Path, manifest: &Manifest, split: Split) -> Result<MetricsReport> {
        let ck = Checkpoint::<T>::load(checkpoint)?;
        let rows: Vec<&ManifestRow> = manifest.rows_in(split).collect();
        if rows.is_empty() {
            return Err(Error::Data(format!("split `{split}` has no rows in the manifest")));
        }
        let (model, data) = features_for(&ck, &rows)?;
        evaluate(&model, &data, &split.to_string(), None, EVAL_BATCH)
    }
    match read_checkpoint_header(checkpoint)?.dtype {
        DType::F32 => typed::<f32>(checkpoint, manifest, split),
        DType::F64 => typed::<f64>(checkpoint, manifest, split),
    }
}

/// Class probabilities for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

pub fn run_infer(checkpoint: &Path, wav: &Path) -> Result<Prediction> {
    fn typed<T: Scalar>(checkpoint: &Path, wav: &Path) -> Result<Prediction> {
        let ck = Checkpoint::<T>::load(checkpoint)?;
        let model = ck.model()?;
        let frontend = Frontend::new(ck.header.frontend.clone())?;
        let x = frontend.patches::<T>(&frontend.log_mel_file(wav)?, &ck.header.normalizer)?;
        let mut shape = vec![1];
        shape.extend_from_slice(x.shape());
        let logits = model.predict(&x.reshape(&shape)?)?;
        logits.check_finite("inference")?;
        let probs = softmax_rows(&logits.cast::<f64>())?;
        let scores = probs.into_data();
        Ok(Prediction { label: crate::train::metrics::argmax(&scores), scores })
    }
    match read_checkpoint_header(checkpoint)?.dtype {
        DType::F32 => typed::<f32>(checkpoint, wav),
        DType::F64 => typed::<f64>(checkpoint, wav),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: u8,
    pub report: MetricsReport,
    pub best_epoch: usize,
    /// Manifest paths of the held-out clips.
    pub held_out: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfoldSummary {
    pub k: usize,
    pub folds: Vec<FoldReport>,
    pub mean_acc: f64,
    pub best_acc: f64,
}

/// Trains one model per fold label, holding that fold out.
///
/// Per fold, normalization is fitted on the remaining folds and the epoch is
/// selected on running training metrics; the held-out fold is reported each
/// epoch and scored with the selected model.
pub fn run_kfold(cfg: &RunConfig, manifest: &Manifest, out: &Path, echo: &mut dyn FnMut(&str)) -> Result<KfoldSummary> {
    match cfg.train.dtype {
        DType::F32 => run_kfold_typed::<f32>(cfg, manifest, out, echo),
        DType::F64 => run_kfold_typed::<f64>(cfg, manifest, out, echo),
    }
}

fn run_kfold_typed<T: Scalar>(
    cfg: &RunConfig,
    manifest: &Manifest,
    out: &Path,
    echo: &mut dyn FnMut(&str),
) -> Result<KfoldSummary> {
    if let Some(r) = manifest.rows.iter().find(|r| !matches!(r.split, Split::Fold(_))) {
        return Err(Error::Data(format!("row `{}` has split `{}`, not a fold label", r.path, r.split)));
    }
    let folds = manifest.folds();
    if folds.len() < 2 {
        return Err(Error::Data(format!("cross-validation needs at least 2 distinct folds, found {}", folds.len())));
    }
    let eff: EffectiveConfig = cfg.resolve(manifest.num_classes())?;
    create_dir(out)?;
    write_json(&out.join(EFFECTIVE_CONFIG_FILE), &eff)?;
    let frontend = Frontend::new(eff.frontend.clone())?;
    let all: Vec<&ManifestRow> = manifest.rows.iter().collect();
    let mels = log_mels(&frontend, &all)?;

    let mut reports = Vec::with_capacity(folds.len());
    for &fold in &folds {
        let name = format!("fold{fold}");
        let held = |r: &&ManifestRow| r.split == Split::Fold(fold);
        let pick = |keep: bool| -> (Vec<&ManifestRow>, Vec<MelSpec>) {
            all.iter().zip(&mels).filter(|(r, _)| held(r) == keep).map(|(r, m)| (*r, m.clone())).unzip()
        };
        let (train_rows, train_mels) = pick(false);
        let (test_rows, test_mels) = pick(true);
        let norm = Normalizer::fit(&train_mels)?;
        let train_set = dataset::<T>(&frontend, &train_mels, &train_rows, &norm)?;
        let test_set = dataset::<T>(&frontend, &test_mels, &test_rows, &norm)?;

        let dir = out.join(&name);
        create_dir(&dir)?;
        let model = Model::<T>::new(eff.model.clone(), eff.train.seed)?;
        let mut sink = MetricsSink::create(dir.join(METRICS_FILE), echo)?;
        let outcome = train(model, &train_set, &[(&name, &test_set)], "train", &eff.train, &mut |r| sink.emit(r))?;
        let mut ck = Checkpoint::new(&outcome.best_model, &eff.frontend, norm);
        let steps_per_epoch = train_set.len().div_ceil(eff.train.batch_size) as u64;
        ck.header.train_state =
            Some(TrainState { epoch: outcome.best_epoch, step: steps_per_epoch * (outcome.best_epoch as u64 + 1) });
        ck.save(dir.join(CHECKPOINT_FILE))?;
        let report = evaluate(&outcome.best_model, &test_set, &name, Some(outcome.best_epoch), EVAL_BATCH)?;
        reports.push(FoldReport {
            fold,
            report,
            best_epoch: outcome.best_epoch,
            held_out: test_rows.iter().map(|r| r.path.clone()).collect(),
        });
    }
    let accs: Vec<f64> = reports.iter().map(|f| f.report.acc).collect();
    let summary = KfoldSummary {
        k: folds.len(),
        mean_acc: accs.iter().sum::<f64>() / accs.len() as f64,
        best_acc: accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        folds: reports,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}
