//! Model assembly: patch projection, stacked mixer blocks, final norm,
//! mean pooling over the sequence and a linear classification head.
//!
//! There are no class or distillation tokens and no positional embedding.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::blocks::{apply_branch, BranchKind, BranchParams, MixingBranchConfig};
use super::layers::layer_norm_op;
use super::params::{Bindings, ParamStore};
use super::roll::{RollConfig, DEFAULT_CHANNELS, DEFAULT_HEIGHT_FOLDS};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensor::{ReduceKind, Tensor};

/// Which branch fills each slot of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Hermit-frequency + roll-time.
    #[serde(rename = "RH")]
    RollHermit,
    /// Hermit-frequency + plain channel mixing.
    #[serde(rename = "H")]
    Hermit,
    /// Plain token mixing + roll-time.
    #[serde(rename = "R")]
    Roll,
    /// Plain Mixer block.
    #[serde(rename = "baseline")]
    Baseline,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::RollHermit, Variant::Hermit, Variant::Roll, Variant::Baseline];

    /// (token slot, channel slot)
    pub fn slots(self) -> (BranchKind, BranchKind) {
        match self {
            Variant::RollHermit => (BranchKind::HermitFrequency, BranchKind::RollTime),
            Variant::Hermit => (BranchKind::HermitFrequency, BranchKind::Channel),
            Variant::Roll => (BranchKind::Token, BranchKind::RollTime),
            Variant::Baseline => (BranchKind::Token, BranchKind::Channel),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::RollHermit => "RH",
            Variant::Hermit => "H",
            Variant::Roll => "R",
            Variant::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RH" | "rh" => Ok(Variant::RollHermit),
            "H" | "h" => Ok(Variant::Hermit),
            "R" | "r" => Ok(Variant::Roll),
            "baseline" | "BASELINE" | "Baseline" => Ok(Variant::Baseline),
            other => Err(Error::Config(format!("unknown model variant `{other}` (expected RH, H, R or baseline)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub ff_expansion_channel: f64,
    pub ff_expansion_token: f64,
    pub num_classes: usize,
    pub variant: Variant,
    /// Flattened patch length fed to the input projection.
    pub patch_dim: usize,
    pub roll_channels: usize,
    pub roll_height_folds: usize,
}

impl Default for ModelConfig {
    /// Full-size configuration: 600 tokens of width 768, 12 blocks.
    fn default() -> Self {
        ModelConfig {
            seq_len: 600,
            embed_dim: 768,
            depth: 12,
            ff_expansion_channel: 4.0,
            ff_expansion_token: 0.5,
            num_classes: 10,
            variant: Variant::RollHermit,
            patch_dim: 128,
            roll_channels: DEFAULT_CHANNELS,
            roll_height_folds: DEFAULT_HEIGHT_FOLDS,
        }
    }
}

impl ModelConfig {
    /// Small configuration that trains on a CPU in minutes.
    pub fn desk(num_classes: usize) -> Self {
        ModelConfig { seq_len: 32, embed_dim: 64, depth: 4, num_classes, patch_dim: 64, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.seq_len == 0 || self.embed_dim == 0 {
            return err(format!("seq_len and embed_dim must be positive, got {}×{}", self.seq_len, self.embed_dim));
        }
        if self.depth == 0 {
            return err("depth must be at least 1".into());
        }
        if self.embed_dim < 4 {
            return err(format!("embed_dim must be at least 4, got {}", self.embed_dim));
        }
        if self.num_classes == 0 || self.patch_dim == 0 {
            return err("num_classes and patch_dim must be positive".into());
        }
        if !(self.ff_expansion_channel > 0.0 && self.ff_expansion_token > 0.0) {
            return err("feed-forward expansion factors must be positive".into());
        }
        RollConfig::with_folds(self.roll_channels, self.roll_height_folds, 0, self.depth)?;
        if self.seq_len % self.roll_height_folds != 0 || (self.embed_dim * self.roll_height_folds) % self.roll_channels != 0
        {
            return err(format!(
                "seq_len={} must be divisible by C_a={} and embed_dim·C_a={} by C={}",
                self.seq_len,
                self.roll_height_folds,
                self.embed_dim * self.roll_height_folds,
                self.roll_channels
            ));
        }
        Ok(())
    }

    pub fn channel_hidden(&self) -> usize {
        ((self.ff_expansion_channel * self.embed_dim as f64).round() as usize).max(1)
    }

    pub fn token_hidden(&self) -> usize {
        ((self.ff_expansion_token * self.seq_len as f64).round() as usize).max(1)
    }

    pub fn branch_config(&self, kind: BranchKind) -> MixingBranchConfig {
        if kind.mixes_tokens() {
            MixingBranchConfig { dim: self.seq_len, hidden: self.token_hidden(), kind }
        } else {
            MixingBranchConfig { dim: self.embed_dim, hidden: self.channel_hidden(), kind }
        }
    }

    pub fn roll_config(&self, block_index: usize) -> Result<RollConfig> {
        RollConfig::with_folds(self.roll_channels, self.roll_height_folds, block_index, self.depth)
    }

    /// Parameter prefix of the given slot of block `index`.
    pub fn branch_prefix(&self, index: usize, kind: BranchKind) -> String {
        format!("blocks.{index}.{}", kind.param_segment())
    }

    /// Every parameter name and shape in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.embed_dim;
        let mut out = vec![
            ("patch_embed.weight".to_string(), vec![self.patch_dim, d]),
            ("patch_embed.bias".to_string(), vec![d]),
        ];
        let (token, channel) = self.variant.slots();
        for i in 0..self.depth {
            for kind in [token, channel] {
                out.extend(self.branch_config(kind).param_shapes(&self.branch_prefix(i, kind), d));
            }
        }
        out.extend([
            ("norm.gain".to_string(), vec![d]),
            ("norm.bias".to_string(), vec![d]),
            ("head.weight".to_string(), vec![d, self.num_classes]),
            ("head.bias".to_string(), vec![self.num_classes]),
        ]);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Weights from a normal truncated at two standard deviations, zero
    /// biases, unit norm gains.
    TruncatedNormal { std: f64, seed: u64 },
    /// Every parameter zero.
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    /// Standard initialization: truncated normal weights with std 0.02.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_init(config, Init::TruncatedNormal { std: 0.02, seed })
    }

    pub fn with_init(config: ModelConfig, init: Init) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = match init {
            Init::TruncatedNormal { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Init::Zeros => None,
        };
        for (name, shape) in config.param_shapes() {
            let tensor = match (&mut rng, init) {
                (Some(rng), Init::TruncatedNormal { std, .. }) => {
                    if name.ends_with(".weight") {
                        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
                        let n = shape.iter().product();
                        let data = (0..n)
                            .map(|_| loop {
                                let v: f64 = normal.sample(rng);
                                if v.abs() <= 2.0 * std {
                                    break c::<T>(v);
                                }
                            })
                            .collect();
                        Tensor::from_vec(&shape, data)?
                    } else if name.ends_with(".gain") {
                        Tensor::ones(&shape)
                    } else {
                        Tensor::zeros(&shape)
                    }
                }
                _ => Tensor::zeros(&shape),
            };
            params.insert(name, tensor);
        }
        Ok(Model { config, params })
    }

    /// Wraps existing parameters after checking the inventory against `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let expected = config.param_shapes();
        if expected.len() != params.len() {
            return Err(Error::Config(format!(
                "parameter inventory has {} arrays, configuration expects {}",
                params.len(),
                expected.len()
            )));
        }
        for ((name, shape), (have_name, have)) in expected.iter().zip(params.iter()) {
            if name != have_name || shape.as_slice() != have.shape() {
                return Err(Error::Config(format!(
                    "parameter `{have_name}` {:?} does not match expected `{name}` {shape:?}",
                    have.shape()
                )));
            }
        }
        Ok(Model { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    /// One mixer block: token-slot branch then channel-slot branch.
    pub fn block(&self, tape: &mut Tape<T>, b: &Bindings, x: Var, index: usize) -> Result<Var> {
        if index >= self.config.depth {
            return Err(Error::Config(format!("block index {index} beyond depth {}", self.config.depth)));
        }
        let roll = self.config.roll_config(index)?;
        let (token, channel) = self.config.variant.slots();
        let mut h = x;
        for kind in [token, channel] {
            let p = BranchParams::resolve(b, &self.config.branch_prefix(index, kind))?;
            h = apply_branch(tape, h, kind, &p, &roll)?;
        }
        Ok(h)
    }

    /// Runs every block on `[B, S, D]` tokens and returns each block's output.
    pub fn forward_blocks(&self, tape: &mut Tape<T>, b: &Bindings, tokens: Var) -> Result<Vec<Var>> {
        let shape = tape.value(tokens).shape();
        if shape.len() != 3 || shape[1] != self.config.seq_len || shape[2] != self.config.embed_dim {
            return Err(Error::Shape(format!(
                "model expects tokens [B, {}, {}], got {:?}",
                self.config.seq_len, self.config.embed_dim, shape
            )));
        }
        let mut outs = Vec::with_capacity(self.config.depth);
        let mut h = tokens;
        for i in 0..self.config.depth {
            h = self.block(tape, b, h, i)?;
            outs.push(h);
        }
        Ok(outs)
    }

    /// Tokens `[B, S, D]` to logits `[B, num_classes]`.
    pub fn forward_tokens(&self, tape: &mut Tape<T>, b: &Bindings, tokens: Var) -> Result<Var> {
        let h = *self.forward_blocks(tape, b, tokens)?.last().expect("depth >= 1");
        let h = layer_norm_op(tape, h, b.get("norm.gain")?, b.get("norm.bias")?)?;
        let pooled = tape.reduce(h, 1, ReduceKind::Mean)?;
        tape.linear(pooled, b.get("head.weight")?, b.get("head.bias")?)
    }

    /// Flattened patches `[B, S, patch_dim]` to tokens `[B, S, D]`.
    pub fn embed(&self, tape: &mut Tape<T>, b: &Bindings, patches: Var) -> Result<Var> {
        tape.linear(patches, b.get("patch_embed.weight")?, b.get("patch_embed.bias")?)
    }

    /// Flattened patches to logits.
    pub fn forward(&self, tape: &mut Tape<T>, b: &Bindings, patches: Var) -> Result<Var> {
        let tokens = self.embed(tape, b, patches)?;
        self.forward_tokens(tape, b, tokens)
    }

    /// Inference-only logits for a batch of flattened patches.
    pub fn predict(&self, patches: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let b = self.params.bind_frozen(&mut tape);
        let x = tape.constant(patches.clone());
        let logits = self.forward(&mut tape, &b, x)?;
        Ok(tape.value(logits).clone())
    }
}
