//! Mixer architecture: roll and Hermitian-FFT mixing branches, blocks, and the
//! classifier built from them.

pub mod blocks;
pub mod layers;
pub mod model;
pub mod params;
pub mod roll;

pub use blocks::{BranchKind, BranchParams, MixingBranchConfig};
pub use layers::{feed_forward, layer_norm, layer_norm_op, FeedForwardParams};
pub use model::{Init, Model, ModelConfig, Variant};
pub use params::{Bindings, ParamStore};
pub use roll::{roll, roll_inverse, roll_op, RollConfig};
