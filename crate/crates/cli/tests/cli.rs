use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn rhmixer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhmixer")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Desk-scale config with a short schedule.
fn write_config(dir: &Path, epochs: usize, lr0: f64) -> PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{"frontend": {{"mel_bins": 32, "fmin": 20.0, "target_frames": 64, "patch_t": 8, "patch_f": 8,
             "embed_dim": 64, "seq_len": 32}},
            "model": {{"depth": 2}},
            "train": {{"epochs": {epochs}, "lr0": {lr0}, "batch_size": 8}}}}"#
    );
    fs::write(&path, text).unwrap();
    path
}

fn synth(dir: &Path, args: &[&str]) -> PathBuf {
    let mut full = vec!["synth", "--out", s(dir)];
    full.extend_from_slice(args);
    let out = rhmixer(&full);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    PathBuf::from(stdout(&out).trim())
}

#[test]
fn selftest_passes() {
    let out = rhmixer(&["selftest"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.csv");
    let out = rhmixer(&["train", "--manifest", s(&missing), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("nowhere.csv"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &["--train", "4", "--test", "0"]);
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"train": {"learning_rate": 0.1}}"#).unwrap();
    let out = rhmixer(&["train", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("learning_rate"), "{}", stderr(&out));
    assert!(!dir.path().join("run").exists(), "no output before validation");
}

#[test]
fn bad_variant_is_rejected() {
    let out = rhmixer(&["train", "--manifest", "m.csv", "--out", "o", "--variant", "XL"]);
    assert_eq!(code(&out), 2, "clap usage errors also exit 2");
}

#[test]
fn train_eval_infer_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &["--train", "8", "--val", "4", "--test", "4", "--seed", "3"]);
    let cfg = write_config(dir.path(), 3, 1e-3);
    let run = dir.path().join("run");
    let out = rhmixer(&[
        "train", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&run), "--seed", "5", "--variant", "H",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // One line per epoch per split, on stdout and in the file.
    let lines = fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3 * 3);
    assert_eq!(stdout(&out), lines);
    for split in ["train", "val", "test"] {
        let n = lines.lines().filter(|l| serde_json::from_str::<Value>(l).unwrap()["split"] == split).count();
        assert_eq!(n, 3, "{split}");
    }
    let eff: Value = serde_json::from_str(&fs::read_to_string(run.join("effective-config.json")).unwrap()).unwrap();
    assert_eq!(eff["model"]["variant"], "H");
    assert_eq!(eff["train"]["seed"], 5);
    assert_eq!(eff["model"]["num_classes"], 4);
    let ck = run.join("checkpoint.bin");
    assert!(ck.exists());

    let eval = |split: &str| rhmixer(&["eval", "--checkpoint", s(&ck), "--manifest", s(&manifest), "--split", split]);
    let a = eval("test");
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&eval("test")));
    let report: Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(report["samples"], 4);
    assert_eq!(report["split"], "test");

    // The synthetic manifest has no fold rows.
    assert_eq!(code(&eval("fold3")), 3);

    let wav = dir.path().join("clips/test_0001.wav");
    let first = rhmixer(&["infer", "--checkpoint", s(&ck), s(&wav)]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    assert_eq!(stdout(&first), stdout(&rhmixer(&["infer", "--checkpoint", s(&ck), s(&wav)])));
    let pred: Value = serde_json::from_str(&stdout(&first)).unwrap();
    let scores: Vec<f64> = pred["scores"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(scores.len(), 4);
    assert!((scores.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    let label = pred["label"].as_u64().unwrap() as usize;
    assert!(scores.iter().all(|&p| p <= scores[label]));

    // Silence still gets a valid label.
    let silence = dir.path().join("silence.wav");
    write_silence(&silence, 16000);
    let out = rhmixer(&["infer", "--checkpoint", s(&ck), s(&silence)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let pred: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(pred["label"].as_u64().unwrap() < 4);
    assert!(pred["scores"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap().is_finite()));

    // Not a WAV file.
    let junk = dir.path().join("junk.wav");
    fs::write(&junk, b"definitely not audio").unwrap();
    assert_eq!(code(&rhmixer(&["infer", "--checkpoint", s(&ck), s(&junk)])), 3);

    // A damaged checkpoint is a configuration problem, not a crash.
    let bytes = fs::read(&ck).unwrap();
    let broken = dir.path().join("broken.bin");
    fs::write(&broken, &bytes[..bytes.len() / 2]).unwrap();
    let out = rhmixer(&["eval", "--checkpoint", s(&broken), "--manifest", s(&manifest), "--split", "test"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

fn write_silence(path: &Path, samples: usize) {
    let data_len = (samples * 2) as u32;
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&16000u32.to_le_bytes());
    b.extend_from_slice(&32000u32.to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    b.resize(b.len() + samples * 2, 0);
    fs::write(path, b).unwrap();
}

#[test]
fn overfit_model_scores_perfectly_on_its_training_split() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &["--train", "8", "--test", "0", "--seed", "9"]);
    let cfg = write_config(dir.path(), 25, 2e-3);
    let run = dir.path().join("run");
    let out = rhmixer(&["train", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&run)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = rhmixer(&["eval", "--checkpoint", s(&run.join("checkpoint.bin")), "--manifest", s(&manifest), "--split", "train"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["acc"], 1.0, "{report}");
}

#[test]
fn empty_split_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &["--train", "4", "--test", "0"]);
    let cfg = write_config(dir.path(), 1, 1e-3);
    let run = dir.path().join("run");
    assert_eq!(code(&rhmixer(&["train", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&run)])), 0);
    let out = rhmixer(&["eval", "--checkpoint", s(&run.join("checkpoint.bin")), "--manifest", s(&manifest), "--split", "val"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("val"));
}

#[test]
fn two_fold_cross_validation() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &["--train", "0", "--test", "0", "--folds", "2", "--folded", "8"]);
    let cfg = write_config(dir.path(), 2, 1e-3);
    let run = dir.path().join("cv");
    let out = rhmixer(&["kfold", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&run)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(run.join("fold0/checkpoint.bin").exists());
    assert!(run.join("fold1/checkpoint.bin").exists());
    assert!(!run.join("fold2").exists());

    let summary: Value = serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["k"], 2);
    let accs: Vec<f64> = summary["folds"].as_array().unwrap().iter().map(|f| f["report"]["acc"].as_f64().unwrap()).collect();
    let mean = accs.iter().sum::<f64>() / 2.0;
    assert_eq!(summary["mean_acc"].as_f64().unwrap(), mean);
    assert_eq!(summary["best_acc"].as_f64().unwrap(), accs[0].max(accs[1]));
}

#[test]
fn kfold_rejects_manifest_without_folds() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &["--train", "4", "--test", "0"]);
    let out = rhmixer(&["kfold", "--manifest", s(&manifest), "--out", s(&dir.path().join("cv"))]);
    assert_eq!(code(&out), 3);
}
