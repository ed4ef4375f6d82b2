//! Log-mel containers, dataset standardization, fixed-length framing and
//! patch slicing.

use serde::{Deserialize, Serialize};

use super::FrontendConfig;
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

/// Time-major `frames × mel_bins` log-mel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpec {
    frames: usize,
    mel_bins: usize,
    values: Vec<f64>,
    normalized: bool,
}

impl MelSpec {
    pub fn new(frames: usize, mel_bins: usize, values: Vec<f64>) -> Result<Self> {
        if frames == 0 || mel_bins == 0 || values.len() != frames * mel_bins {
            return Err(Error::Shape(format!(
                "mel spectrogram {frames}×{mel_bins} with {} values",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("mel spectrogram at frame {}", i / mel_bins)));
        }
        Ok(MelSpec { frames, mel_bins, values, normalized: false })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn mel_bins(&self) -> usize {
        self.mel_bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn at(&self, t: usize, f: usize) -> f64 {
        self.values[t * self.mel_bins + f]
    }
}

/// Truncates or zero-pads the tail to exactly `target` frames.
pub fn fix_length(mel: &MelSpec, target: usize) -> Result<MelSpec> {
    if target == 0 {
        return Err(Error::Config("target frame count must be positive".into()));
    }
    let mut values = mel.values.clone();
    values.resize(target * mel.mel_bins, 0.0);
    Ok(MelSpec { frames: target, mel_bins: mel.mel_bins, values, normalized: mel.normalized })
}

/// Scalar mean and standard deviation of training-split log-mel values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer { mean: 0.0, std: 1.0 }
    }

    /// Fits on every value of every training spectrogram.
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a MelSpec>) -> Result<Self> {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for mel in train {
            if mel.normalized {
                return Err(Error::State("normalizer fitted on already normalized features".into()));
            }
            n += mel.values.len();
            sum += mel.values.iter().sum::<f64>();
            sq += mel.values.iter().map(|v| v * v).sum::<f64>();
        }
        if n == 0 {
            return Err(Error::Data("cannot fit normalization on an empty training split".into()));
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        Ok(Normalizer { mean, std: var.sqrt().max(1e-8) })
    }

    pub fn apply(&self, mel: &MelSpec) -> Result<MelSpec> {
        if mel.normalized {
            return Err(Error::State("mel spectrogram is already normalized".into()));
        }
        let values = mel.values.iter().map(|v| (v - self.mean) / self.std).collect();
        Ok(MelSpec { frames: mel.frames, mel_bins: mel.mel_bins, values, normalized: true })
    }
}

/// Flattened non-overlapping patches, `[S, patch_t·patch_f]`.
///
/// Token `s` holds time patch `s % nt` of frequency band `s / nt`, so time
/// patches vary fastest. Within a patch, frequency varies fastest.
pub fn patchify<T: Scalar>(mel: &MelSpec, cfg: &FrontendConfig) -> Result<Tensor<T>> {
    cfg.validate_patches()?;
    if mel.frames != cfg.target_frames || mel.mel_bins != cfg.mel_bins {
        return Err(Error::Shape(format!(
            "patching expects {}×{} mel frames, got {}×{}",
            cfg.target_frames, cfg.mel_bins, mel.frames, mel.mel_bins
        )));
    }
    let (pt, pf) = (cfg.patch_t, cfg.patch_f);
    let nt = cfg.target_frames / pt;
    let nf = cfg.mel_bins / pf;
    let mut data = Vec::with_capacity(mel.values.len());
    for bf in 0..nf {
        for bt in 0..nt {
            for dt in 0..pt {
                let row = (bt * pt + dt) * mel.mel_bins + bf * pf;
                data.extend(mel.values[row..row + pf].iter().map(|&v| c::<T>(v)));
            }
        }
    }
    Tensor::from_vec(&[nt * nf, pt * pf], data)
}

/// Patches projected to `[S, D]` by `weight [patch_dim, D]` and `bias [D]`.
pub fn patch_embed<T: Scalar>(
    mel: &MelSpec,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    cfg: &FrontendConfig,
) -> Result<Tensor<T>> {
    patchify::<T>(mel, cfg)?.matmul(weight)?.add_row(bias)
}
