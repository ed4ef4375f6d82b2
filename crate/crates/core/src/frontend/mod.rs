//! Audio to token grid: WAV decoding, STFT, log-mel, standardization,
//! fixed-length framing and patch slicing.

pub mod features;
pub mod manifest;
pub mod stft;
pub mod wav;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use features::{fix_length, patch_embed, patchify, MelSpec, Normalizer};
pub use manifest::{Manifest, ManifestRow, Split};
pub use stft::{mel_project, stft, MelFilterbank, Spectrogram};
pub use wav::{load_wav, write_wav_pcm16, AudioClip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop_len: usize,
    pub n_fft: usize,
    pub mel_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub target_frames: usize,
    pub patch_t: usize,
    pub patch_f: usize,
    pub embed_dim: usize,
    pub seq_len: usize,
}

impl Default for FrontendConfig {
    /// 25 ms / 10 ms framing at 16 kHz, 128 mel bins, 600 frames sliced into
    /// 4×32 patches: 600 tokens of width 768.
    fn default() -> Self {
        FrontendConfig {
            sample_rate: 16000,
            window_len: 400,
            hop_len: 160,
            n_fft: 512,
            mel_bins: 128,
            fmin: 0.0,
            fmax: 8000.0,
            target_frames: 600,
            patch_t: 4,
            patch_f: 32,
            embed_dim: 768,
            seq_len: 600,
        }
    }
}

impl FrontendConfig {
    /// 64 frames × 32 mel bins in 8×8 patches: 32 tokens of width 64.
    pub fn desk() -> Self {
        FrontendConfig {
            mel_bins: 32,
            fmin: 20.0,
            target_frames: 64,
            patch_t: 8,
            patch_f: 8,
            embed_dim: 64,
            seq_len: 32,
            ..Default::default()
        }
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_t * self.patch_f
    }

    pub(crate) fn validate_stft(&self) -> Result<()> {
        if self.sample_rate == 0 || self.window_len == 0 || self.hop_len == 0 {
            return Err(Error::Config("sample_rate, window_len and hop_len must be positive".into()));
        }
        if self.n_fft < self.window_len {
            return Err(Error::Config(format!("n_fft={} is shorter than window_len={}", self.n_fft, self.window_len)));
        }
        Ok(())
    }

    pub(crate) fn validate_mel(&self) -> Result<()> {
        self.validate_stft()?;
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::Config(format!(
                "need 0 ≤ fmin < fmax ≤ {nyquist} Hz, got fmin={} fmax={}",
                self.fmin, self.fmax
            )));
        }
        if self.mel_bins == 0 {
            return Err(Error::Config("mel_bins must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn validate_patches(&self) -> Result<()> {
        let (t, f, pt, pf) = (self.target_frames, self.mel_bins, self.patch_t, self.patch_f);
        if t == 0 || pt == 0 || pf == 0 || self.embed_dim == 0 {
            return Err(Error::Config("target_frames, patch sizes and embed_dim must be positive".into()));
        }
        if t % pt != 0 || f % pf != 0 {
            return Err(Error::Config(format!(
                "patch {pt}×{pf} does not tile {t} frames × {f} mel bins"
            )));
        }
        if (t / pt) * (f / pf) != self.seq_len {
            return Err(Error::Config(format!(
                "{t}×{f} in {pt}×{pf} patches gives {} tokens, seq_len is {}",
                (t / pt) * (f / pf),
                self.seq_len
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_mel()?;
        self.validate_patches()
    }
}

/// Reusable feature extractor for one configuration.
#[derive(Debug, Clone)]
pub struct Frontend {
    cfg: FrontendConfig,
    bank: MelFilterbank,
}

impl Frontend {
    pub fn new(cfg: FrontendConfig) -> Result<Self> {
        cfg.validate()?;
        let bank = MelFilterbank::new(&cfg)?;
        Ok(Frontend { cfg, bank })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    /// Unnormalized, variable-length log-mel of a clip at any sample rate.
    pub fn log_mel(&self, clip: &AudioClip) -> Result<MelSpec> {
        let clip = clip.resampled(self.cfg.sample_rate)?;
        mel_project(&stft(&clip, &self.cfg)?, &self.bank)
    }

    pub fn log_mel_file(&self, path: impl AsRef<Path>) -> Result<MelSpec> {
        let path = path.as_ref();
        self.log_mel(&load_wav(path)?).map_err(|e| match e {
            Error::InputTooShort(m) => Error::InputTooShort(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Standardize, then fix the length, then slice: `[S, patch_dim]`.
    pub fn patches<T: Scalar>(&self, mel: &MelSpec, norm: &Normalizer) -> Result<Tensor<T>> {
        let mel = fix_length(&norm.apply(mel)?, self.cfg.target_frames)?;
        patchify(&mel, &self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_are_valid() {
        FrontendConfig::default().validate().unwrap();
        FrontendConfig::desk().validate().unwrap();
        assert_eq!(FrontendConfig::default().patch_dim(), 128);
        assert_eq!(FrontendConfig::desk().patch_dim(), 64);
    }

    #[test]
    fn n_fft_shorter_than_window() {
        let cfg = FrontendConfig { n_fft: 256, ..FrontendConfig::desk() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn token_count_mismatch() {
        let cfg = FrontendConfig { seq_len: 31, ..FrontendConfig::desk() };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("32 tokens"), "{err}");
    }

    #[test]
    fn pipeline_is_deterministic() {
        let fe = Frontend::new(FrontendConfig::desk()).unwrap();
        let samples: Vec<f64> = (0..10240).map(|i| ((i * 7919 % 1000) as f64 / 500.0 - 1.0) * 0.3).collect();
        let clip = AudioClip::new(samples, 16000).unwrap();
        let mel = fe.log_mel(&clip).unwrap();
        let norm = Normalizer::fit([&mel]).unwrap();
        let a = fe.patches::<f32>(&mel, &norm).unwrap();
        let b = fe.patches::<f32>(&fe.log_mel(&clip).unwrap(), &norm).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[32, 64]);
    }
}
