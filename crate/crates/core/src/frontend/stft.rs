//! Short-time Fourier transform and log-mel projection.

use num_complex::Complex64;

use super::features::MelSpec;
use super::wav::AudioClip;
use super::FrontendConfig;
use crate::error::{Error, Result};
use crate::spectral::rfft;

/// Added to mel power before the logarithm.
pub const LOG_FLOOR: f64 = 1e-6;

/// Complex STFT frames, `frames × (n_fft/2 + 1)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

/// Reflects `pad` samples at each end without repeating the edge sample.
pub fn reflect_pad(x: &[f64], pad: usize) -> Result<Vec<f64>> {
    if pad == 0 {
        return Ok(x.to_vec());
    }
    if x.len() <= pad {
        return Err(Error::InputTooShort(format!(
            "{} samples cannot be reflection-padded by {pad}",
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len() + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    let n = x.len();
    out.extend((1..=pad).map(|i| x[n - 1 - i]));
    Ok(out)
}

/// Hann-windowed frames of the reflection-padded clip.
pub fn stft(clip: &AudioClip, cfg: &FrontendConfig) -> Result<Spectrogram> {
    cfg.validate_stft()?;
    let padded = reflect_pad(&clip.samples, cfg.window_len / 2)?;
    if padded.len() < cfg.window_len {
        return Err(Error::InputTooShort(format!(
            "{} samples after padding, window needs {}",
            padded.len(),
            cfg.window_len
        )));
    }
    let frames = 1 + (padded.len() - cfg.window_len) / cfg.hop_len;
    let window = hann(cfg.window_len);
    let bins = cfg.n_fft / 2 + 1;
    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![0.0; cfg.n_fft];
    for t in 0..frames {
        let seg = &padded[t * cfg.hop_len..t * cfg.hop_len + cfg.window_len];
        for (b, (&s, &w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = s * w;
        }
        data.extend(rfft(&buf));
    }
    Ok(Spectrogram { frames, bins, data })
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the one-sided power spectrum, `mel_bins × bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub mel_bins: usize,
    pub bins: usize,
    pub weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &FrontendConfig) -> Result<Self> {
        cfg.validate_mel()?;
        let bins = cfg.n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges: Vec<f64> =
            (0..cfg.mel_bins + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.mel_bins + 1) as f64)).collect();
        let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
        let mut weights = vec![0.0; cfg.mel_bins * bins];
        for m in 0..cfg.mel_bins {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * bins..(m + 1) * bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                *w = ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0);
            }
            if row.iter().all(|&w| w == 0.0) {
                // Filters narrower than a bin would otherwise be dead rows.
                let k = ((c / bin_hz).round() as usize).min(bins - 1);
                row[k] = 1.0;
            }
        }
        Ok(MelFilterbank { mel_bins: cfg.mel_bins, bins, weights })
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.bins..(m + 1) * self.bins]
    }

    /// Mel power of one frame's one-sided spectrum.
    pub fn apply_power(&self, power: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self.row(m).iter().zip(power).map(|(w, p)| w * p).sum();
        }
    }
}

/// Power spectrum through the filterbank, then `ln(x + 1e-6)`.
pub fn mel_project(spec: &Spectrogram, bank: &MelFilterbank) -> Result<MelSpec> {
    if spec.bins != bank.bins {
        return Err(Error::Shape(format!("spectrogram has {} bins, filterbank expects {}", spec.bins, bank.bins)));
    }
    let mut values = vec![0.0; spec.frames * bank.mel_bins];
    let mut power = vec![0.0; spec.bins];
    for t in 0..spec.frames {
        for (p, z) in power.iter_mut().zip(spec.frame(t)) {
            *p = z.norm_sqr();
        }
        let out = &mut values[t * bank.mel_bins..(t + 1) * bank.mel_bins];
        bank.apply_power(&power, out);
        for v in out.iter_mut() {
            *v = (*v + LOG_FLOOR).ln();
        }
    }
    MelSpec::new(spec.frames, bank.mel_bins, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> FrontendConfig {
        FrontendConfig::desk()
    }

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::new(samples, 16000).unwrap()
    }

    #[test]
    fn reflect_padding() {
        assert_eq!(reflect_pad(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), vec![3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
        assert!(matches!(reflect_pad(&[1.0, 2.0], 2), Err(Error::InputTooShort(_))));
    }

    #[test]
    fn frame_count() {
        let c = cfg();
        let spec = stft(&clip(vec![0.0; 10240]), &c).unwrap();
        let padded = 10240 + 2 * (c.window_len / 2);
        assert_eq!(spec.frames, 1 + (padded - c.window_len) / c.hop_len);
        assert_eq!(spec.bins, c.n_fft / 2 + 1);
        assert!(spec.data.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn too_short_input() {
        assert!(matches!(stft(&clip(vec![0.1; 150]), &cfg()), Err(Error::InputTooShort(_))));
    }

    #[test]
    fn bin_center_sine_is_concentrated() {
        // A sine at bin k0 through a periodic Hann window of length n_fft has
        // spectrum (−¼, ½, −¼)·A·n/2i at bins k0−1, k0, k0+1 and nothing else.
        let c = FrontendConfig { window_len: 512, ..cfg() };
        let k0 = 37;
        let f = k0 as f64 * c.sample_rate as f64 / c.n_fft as f64;
        let x: Vec<f64> = (0..4000).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 16000.0).sin()).collect();
        let spec = stft(&clip(x), &c).unwrap();
        for t in 2..spec.frames - 2 {
            let e: Vec<f64> = spec.frame(t).iter().map(|z| z.norm_sqr()).collect();
            let total: f64 = e.iter().sum();
            let peak = e.iter().cloned().fold(0.0, f64::max);
            assert_eq!(peak, e[k0]);
            assert!((e[k0] / total - 2.0 / 3.0).abs() < 1e-9);
            assert!((e[k0 - 1] + e[k0] + e[k0 + 1]) / total >= 0.90);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = cfg();
        let x: Vec<f64> = (0..3000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = stft(&clip(x.clone()), &c).unwrap();
        let padded = reflect_pad(&x, c.window_len / 2).unwrap();
        let w = hann(c.window_len);
        let n = c.n_fft;
        let (mut time, mut freq) = (0.0, 0.0);
        for t in 0..spec.frames {
            time += (0..c.window_len).map(|i| (padded[t * c.hop_len + i] * w[i]).powi(2)).sum::<f64>();
            freq += spec
                .frame(t)
                .iter()
                .enumerate()
                .map(|(k, z)| if k == 0 || k == n / 2 { 1.0 } else { 2.0 } * z.norm_sqr())
                .sum::<f64>()
                / n as f64;
        }
        assert!((time - freq).abs() / time <= 1e-6, "{time} vs {freq}");
    }

    #[test]
    fn mel_scale_round_trip() {
        for f in [0.0, 20.0, 440.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 999.985_7).abs() < 1e-3);
    }

    #[test]
    fn filterbank_rows_are_positive() {
        for c in [cfg(), FrontendConfig::default(), FrontendConfig { mel_bins: 128, fmin: 0.0, ..cfg() }] {
            let bank = MelFilterbank::new(&c).unwrap();
            for m in 0..bank.mel_bins {
                assert!(bank.row(m).iter().sum::<f64>() > 0.0, "row {m}");
            }
        }
    }

    #[test]
    fn invalid_band_edges() {
        assert!(matches!(MelFilterbank::new(&FrontendConfig { fmin: 9000.0, ..cfg() }), Err(Error::Config(_))));
        assert!(matches!(MelFilterbank::new(&FrontendConfig { fmax: 8001.0, ..cfg() }), Err(Error::Config(_))));
    }

    #[test]
    fn zeros_give_log_floor() {
        let c = cfg();
        let spec = stft(&clip(vec![0.0; 4000]), &c).unwrap();
        let mel = mel_project(&spec, &MelFilterbank::new(&c).unwrap()).unwrap();
        assert!(mel.values().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn white_noise_matches_direct_filter_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = cfg();
        let x: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = stft(&clip(x), &c).unwrap();
        let mel = mel_project(&spec, &MelFilterbank::new(&c).unwrap()).unwrap();
        // Recompute every triangle weight inline from the band edges.
        let lo = hz_to_mel(c.fmin);
        let hi = hz_to_mel(c.fmax);
        let edge = |i: usize| mel_to_hz(lo + (hi - lo) * i as f64 / (c.mel_bins + 1) as f64);
        for t in 0..spec.frames {
            for m in 0..c.mel_bins {
                let mut acc = 0.0;
                for (k, z) in spec.frame(t).iter().enumerate() {
                    let f = k as f64 * 16000.0 / c.n_fft as f64;
                    let w = if f > edge(m) && f <= edge(m + 1) {
                        (f - edge(m)) / (edge(m + 1) - edge(m))
                    } else if f > edge(m + 1) && f < edge(m + 2) {
                        (edge(m + 2) - f) / (edge(m + 2) - edge(m + 1))
                    } else {
                        0.0
                    };
                    acc += w * (z.re * z.re + z.im * z.im);
                }
                let got = mel.values()[t * c.mel_bins + m].exp() - LOG_FLOOR;
                assert!((got - acc).abs() <= 1e-10 * acc.max(1.0), "t={t} m={m}: {got} vs {acc}");
            }
        }
    }
}
