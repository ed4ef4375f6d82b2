//! RollBlock: a parameter-free permutation that circularly shifts channel
//! groups of a folded activation in four directions.
//!
//! A `[B, H, W]` activation is viewed as `[B, C, H/C_a, W·C_a/C]`. With
//! `g = floor(C/(1+alpha))` and `step = model_depth − alpha`, channels
//! `[0, g)` roll by `+step` along the last axis, `[g, 2g)` by `−step` along it,
//! `[2g, 3g)` by `+step` along the row axis and `[3g, 4g)` by `−step` along it.
//! Group bounds are clamped to `C`; everything past `4g` stays in place.

use serde::{Deserialize, Serialize};

use crate::autodiff::{BackwardRule, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_CHANNELS: usize = 16;
pub const DEFAULT_HEIGHT_FOLDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollConfig {
    /// Channel folds `C`.
    pub channels: usize,
    /// Height folds `C_a`.
    pub height_folds: usize,
    /// 0-based depth index of the owning block.
    pub alpha: usize,
    pub model_depth: usize,
}

impl RollConfig {
    pub fn new(alpha: usize, model_depth: usize) -> Result<Self> {
        Self::with_folds(DEFAULT_CHANNELS, DEFAULT_HEIGHT_FOLDS, alpha, model_depth)
    }

    pub fn with_folds(channels: usize, height_folds: usize, alpha: usize, model_depth: usize) -> Result<Self> {
        let cfg = RollConfig { channels, height_folds, alpha, model_depth };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height_folds == 0 || self.channels % self.height_folds != 0 {
            return Err(Error::Config(format!(
                "roll folds: C={} must be a positive multiple of C_a={}",
                self.channels, self.height_folds
            )));
        }
        if self.alpha >= self.model_depth {
            return Err(Error::Config(format!(
                "roll depth index alpha={} must be below model depth {}",
                self.alpha, self.model_depth
            )));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 + self.alpha as f64)
    }

    /// Channels per shifted group, `floor(gamma·C)`.
    pub fn group_width(&self) -> usize {
        self.channels / (1 + self.alpha)
    }

    pub fn step(&self) -> usize {
        self.model_depth - self.alpha
    }

    /// Folded `(rows, cols)` of one channel plane for an `H × W` activation.
    pub fn fold(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        if height % self.height_folds != 0 || (width * self.height_folds) % self.channels != 0 {
            return Err(Error::Shape(format!(
                "roll cannot fold H={height}, W={width} with C={}, C_a={}: need H divisible by C_a and W·C_a divisible by C",
                self.channels, self.height_folds
            )));
        }
        Ok((height / self.height_folds, width * self.height_folds / self.channels))
    }

    /// Signed shift `(along_rows, amount)` for channel `c`, if it moves.
    fn shift_for(&self, c: usize) -> Option<(bool, i64)> {
        let g = self.group_width();
        if g == 0 {
            return None;
        }
        let step = self.step() as i64;
        match c / g {
            0 => Some((false, step)),
            1 => Some((false, -step)),
            2 => Some((true, step)),
            3 => Some((true, -step)),
            _ => None,
        }
    }
}

fn rotate<T: Copy>(slice: &mut [T], by: i64) {
    let n = slice.len() as i64;
    let r = by.rem_euclid(n) as usize;
    slice.rotate_right(r);
}

fn apply<T: Scalar>(feat: &Tensor<T>, cfg: &RollConfig, direction: i64) -> Result<Tensor<T>> {
    let &[batch, height, width] = feat.shape() else {
        return Err(Error::Rank(format!("roll expects [B, H, W], got {:?}", feat.shape())));
    };
    let (rows, cols) = cfg.fold(height, width)?;
    let plane = rows * cols;
    let mut out = feat.data().to_vec();
    for b in 0..batch {
        let sample = &mut out[b * height * width..(b + 1) * height * width];
        for c in 0..cfg.channels {
            let Some((along_rows, amount)) = cfg.shift_for(c) else { continue };
            let chunk = &mut sample[c * plane..(c + 1) * plane];
            if along_rows {
                rotate(chunk, direction * amount * cols as i64);
            } else {
                for row in chunk.chunks_mut(cols) {
                    rotate(row, direction * amount);
                }
            }
        }
    }
    Tensor::from_vec(feat.shape(), out)
}

/// Forward roll of a `[B, H, W]` activation.
pub fn roll<T: Scalar>(feat: &Tensor<T>, cfg: &RollConfig) -> Result<Tensor<T>> {
    apply(feat, cfg, 1)
}

/// Undoes [`roll`] by negating every shift.
pub fn roll_inverse<T: Scalar>(feat: &Tensor<T>, cfg: &RollConfig) -> Result<Tensor<T>> {
    apply(feat, cfg, -1)
}

struct RollRule(RollConfig);

impl<T: Scalar> BackwardRule<T> for RollRule {
    fn name(&self) -> &'static str {
        "roll"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &[T]) -> Vec<Vec<T>> {
        let g = Tensor::from_vec(inputs[0].shape(), grad_out.to_vec()).expect("gradient shaped like output");
        vec![roll_inverse(&g, &self.0).expect("validated in forward").into_data()]
    }
}

pub fn roll_op<T: Scalar>(tape: &mut Tape<T>, x: Var, cfg: &RollConfig) -> Result<Var> {
    let out = roll(tape.value(x), cfg)?;
    tape.custom(&[x], out, Box::new(RollRule(*cfg)))
}
