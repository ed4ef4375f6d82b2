//! The four residual mixing branches.
//!
//! Token-slot branches (`HermitFrequency`, `Token`) run their feed-forward
//! along the sequence axis between two transpositions; channel-slot branches
//! (`RollTime`, `Channel`) run it along the embedding axis.

use serde::{Deserialize, Serialize};

use super::layers::{feed_forward, layer_norm_op, FeedForwardParams};
use super::params::Bindings;
use super::roll::{roll_op, RollConfig};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::{hfft_op, irfft_op};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    RollTime,
    HermitFrequency,
    Channel,
    Token,
}

impl BranchKind {
    /// Parameter-name segment of this branch inside a block.
    pub fn param_segment(self) -> &'static str {
        match self {
            BranchKind::RollTime => "roll_time",
            BranchKind::HermitFrequency => "hermit_freq",
            BranchKind::Channel => "channel_mix",
            BranchKind::Token => "token_mix",
        }
    }

    /// True when the feed-forward acts along the sequence axis.
    pub fn mixes_tokens(self) -> bool {
        matches!(self, BranchKind::HermitFrequency | BranchKind::Token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixingBranchConfig {
    pub dim: usize,
    pub hidden: usize,
    pub kind: BranchKind,
}

impl MixingBranchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::Config(format!("{:?} branch needs positive widths, got {self:?}", self.kind)));
        }
        Ok(())
    }

    /// Names and shapes of this branch's parameters under `prefix`; the
    /// pre-norm always spans the embedding width.
    pub fn param_shapes(&self, prefix: &str, embed_dim: usize) -> Vec<(String, Vec<usize>)> {
        vec![
            (format!("{prefix}.norm.gain"), vec![embed_dim]),
            (format!("{prefix}.norm.bias"), vec![embed_dim]),
            (format!("{prefix}.ff.fc1.weight"), vec![self.dim, self.hidden]),
            (format!("{prefix}.ff.fc1.bias"), vec![self.hidden]),
            (format!("{prefix}.ff.fc2.weight"), vec![self.hidden, self.dim]),
            (format!("{prefix}.ff.fc2.bias"), vec![self.dim]),
        ]
    }
}

/// Tape handles of one branch: the pre-norm and its feed-forward.
#[derive(Debug, Clone, Copy)]
pub struct BranchParams {
    pub norm_gain: Var,
    pub norm_bias: Var,
    pub ff: FeedForwardParams,
}

impl BranchParams {
    pub fn resolve(b: &Bindings, prefix: &str) -> Result<Self> {
        Ok(BranchParams {
            norm_gain: b.get(&format!("{prefix}.norm.gain"))?,
            norm_bias: b.get(&format!("{prefix}.norm.bias"))?,
            ff: FeedForwardParams {
                fc1_weight: b.get(&format!("{prefix}.ff.fc1.weight"))?,
                fc1_bias: b.get(&format!("{prefix}.ff.fc1.bias"))?,
                fc2_weight: b.get(&format!("{prefix}.ff.fc2.weight"))?,
                fc2_bias: b.get(&format!("{prefix}.ff.fc2.bias"))?,
            },
        })
    }
}

fn expect_rank3<T: Scalar>(tape: &Tape<T>, x: Var, what: &str) -> Result<[usize; 3]> {
    match *tape.value(x).shape() {
        [b, s, d] => Ok([b, s, d]),
        ref other => Err(Error::Rank(format!("{what} expects [B, S, D], got {other:?}"))),
    }
}

/// `x + FF_D(roll(LN(x)))`.
pub fn roll_time_mixing<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &BranchParams, roll: &RollConfig) -> Result<Var> {
    expect_rank3(tape, x, "roll_time_mixing")?;
    let h = layer_norm_op(tape, x, p.norm_gain, p.norm_bias)?;
    let h = roll_op(tape, h, roll)?;
    let h = feed_forward(tape, h, &p.ff)?;
    tape.add(x, h)
}

/// `x + irfft_D(transpose(FF_S(transpose(hfft_D(LN(x))))))`.
pub fn hermit_frequency_mixing<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &BranchParams) -> Result<Var> {
    let [_, _, d] = expect_rank3(tape, x, "hermit_frequency_mixing")?;
    if d < 4 {
        return Err(Error::Shape(format!("hermit_frequency_mixing needs D >= 4, got {d}")));
    }
    let h = layer_norm_op(tape, x, p.norm_gain, p.norm_bias)?;
    let h = hfft_op(tape, h, d)?;
    let h = tape.transpose_last2(h)?;
    let h = feed_forward(tape, h, &p.ff)?;
    let h = tape.transpose_last2(h)?;
    let h = irfft_op(tape, h, d)?;
    tape.add(x, h)
}

/// Standard Mixer channel mixing: `x + FF_D(LN(x))`.
pub fn channel_mixing<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &BranchParams) -> Result<Var> {
    expect_rank3(tape, x, "channel_mixing")?;
    let h = layer_norm_op(tape, x, p.norm_gain, p.norm_bias)?;
    let h = feed_forward(tape, h, &p.ff)?;
    tape.add(x, h)
}

/// Standard Mixer token mixing: `x + transpose(FF_S(transpose(LN(x))))`.
pub fn token_mixing<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &BranchParams) -> Result<Var> {
    expect_rank3(tape, x, "token_mixing")?;
    let h = layer_norm_op(tape, x, p.norm_gain, p.norm_bias)?;
    let h = tape.transpose_last2(h)?;
    let h = feed_forward(tape, h, &p.ff)?;
    let h = tape.transpose_last2(h)?;
    tape.add(x, h)
}

pub fn apply_branch<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    kind: BranchKind,
    p: &BranchParams,
    roll: &RollConfig,
) -> Result<Var> {
    match kind {
        BranchKind::RollTime => roll_time_mixing(tape, x, p, roll),
        BranchKind::HermitFrequency => hermit_frequency_mixing(tape, x, p),
        BranchKind::Channel => channel_mixing(tape, x, p),
        BranchKind::Token => token_mixing(tape, x, p),
    }
}
