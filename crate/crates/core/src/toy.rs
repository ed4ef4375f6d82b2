//! Seeded synthetic tone/chirp dataset with four classes: low tone, high
//! tone, rising chirp, falling chirp.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::frontend::write_wav_pcm16;

pub const TOY_CLASSES: usize = 4;
pub const TOY_SAMPLE_RATE: u32 = 16000;
/// 0.64 s, which frames to 65 hops before trimming to 64.
pub const TOY_CLIP_LEN: usize = 10240;

/// One clip of `class` with random pitch, level, onset and noise.
pub fn toy_clip(class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = TOY_SAMPLE_RATE as f64;
    let (f0, f1) = match class % TOY_CLASSES {
        0 => {
            let f = rng.random_range(300.0..700.0);
            (f, f)
        }
        1 => {
            let f = rng.random_range(1500.0..3000.0);
            (f, f)
        }
        2 => (rng.random_range(300.0..800.0), rng.random_range(2000.0..4000.0)),
        _ => (rng.random_range(2000.0..4000.0), rng.random_range(300.0..800.0)),
    };
    let amp = rng.random_range(0.2..0.8);
    let phase = rng.random_range(0.0..2.0 * PI);
    let len = rng.random_range(TOY_CLIP_LEN * 6 / 10..=TOY_CLIP_LEN);
    let start = rng.random_range(0..=TOY_CLIP_LEN - len);
    let noise = Normal::new(0.0, rng.random_range(0.01..0.05)).expect("valid std");
    let dur = len as f64 / sr;
    (0..TOY_CLIP_LEN)
        .map(|i| {
            let mut s = noise.sample(rng);
            if (start..start + len).contains(&i) {
                let t = (i - start) as f64 / sr;
                let fade = (t / 0.01).min((dur - t) / 0.01).min(1.0);
                s += amp * fade * (2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * dur)) + phase).sin();
            }
            s.clamp(-1.0, 1.0)
        })
        .collect()
}

/// Which splits to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// When nonzero, `folded` clips are spread round-robin over this many folds.
    pub folds: usize,
    pub folded: usize,
    pub seed: u64,
}

impl ToySpec {
    /// 400 training and 100 test clips.
    pub fn standard(seed: u64) -> Self {
        ToySpec { train: 400, val: 0, test: 100, folds: 0, folded: 0, seed }
    }

    /// `n` clips spread over `k` folds.
    pub fn folded(n: usize, k: usize, seed: u64) -> Self {
        ToySpec { train: 0, val: 0, test: 0, folds: k, folded: n, seed }
    }
}

/// Writes `clips/*.wav` and `manifest.csv` under `dir`; returns the manifest path.
pub fn write_toy_dataset(dir: impl AsRef<Path>, spec: &ToySpec) -> Result<PathBuf> {
    let dir = dir.as_ref();
    if spec.folds > 10 {
        return Err(Error::Config(format!("at most 10 folds, asked for {}", spec.folds)));
    }
    if spec.folded > 0 && spec.folds == 0 {
        return Err(Error::Config("folded clips need at least one fold".into()));
    }
    let clips = dir.join("clips");
    fs::create_dir_all(&clips).map_err(|e| Error::io(&clips, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut manifest = String::from("path,label,split\n");
    let mut emit = |split: String, i: usize, rng: &mut ChaCha8Rng| -> Result<()> {
        let label = i % TOY_CLASSES;
        let rel = format!("clips/{split}_{i:04}.wav");
        write_wav_pcm16(dir.join(&rel), &toy_clip(label, rng), TOY_SAMPLE_RATE)?;
        manifest.push_str(&format!("{rel},{label},{split}\n"));
        Ok(())
    };
    for (split, n) in [("train", spec.train), ("val", spec.val), ("test", spec.test)] {
        for i in 0..n {
            emit(split.to_string(), i, &mut rng)?;
        }
    }
    for i in 0..spec.folded {
        emit(format!("fold{}", i % spec.folds), i, &mut rng)?;
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{load_wav, Manifest, Split};

    #[test]
    fn clips_are_seeded_and_bounded() {
        let a = toy_clip(2, &mut ChaCha8Rng::seed_from_u64(1));
        let b = toy_clip(2, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert_eq!(a.len(), TOY_CLIP_LEN);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn writes_manifest_and_audio() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ToySpec { train: 5, val: 2, test: 3, folds: 2, folded: 4, seed: 7 };
        let path = write_toy_dataset(dir.path(), &spec).unwrap();
        let m = Manifest::load(&path).unwrap();
        assert_eq!(m.rows.len(), 14);
        assert_eq!(m.count(Split::Train), 5);
        assert_eq!(m.folds(), vec![0, 1]);
        let clip = load_wav(&m.rows[0].resolved).unwrap();
        assert_eq!(clip.samples.len(), TOY_CLIP_LEN);
        let again = tempfile::tempdir().unwrap();
        write_toy_dataset(again.path(), &spec).unwrap();
        assert_eq!(fs::read(&m.rows[9].resolved).unwrap(), fs::read(again.path().join(&m.rows[9].path)).unwrap());
    }
}
