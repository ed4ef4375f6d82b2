use crate::autodiff::{BackwardRule, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Standardized rows and their inverse standard deviations.
fn standardize<T: Scalar>(x: &Tensor<T>) -> Result<(Vec<T>, Vec<T>, usize)> {
    let d = *x.shape().last().ok_or_else(|| Error::Rank("layer_norm on a rank-0 tensor".into()))?;
    let inv_d = T::one() / T::from_usize_lossy(d);
    let eps: T = c(LAYER_NORM_EPS);
    let mut xhat = Vec::with_capacity(x.len());
    let mut inv_std = Vec::with_capacity(x.len() / d);
    for row in x.data().chunks(d) {
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let s = T::one() / (var + eps).sqrt();
        xhat.extend(row.iter().map(|&v| (v - mean) * s));
        inv_std.push(s);
    }
    Ok((xhat, inv_std, d))
}

fn check_affine<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>) -> Result<()> {
    let d = x.shape().last().copied().unwrap_or(0);
    if gain.shape() != [d] || bias.shape() != [d] {
        return Err(Error::Shape(format!(
            "layer_norm over last axis {d}: gain {:?}, bias {:?}",
            gain.shape(),
            bias.shape()
        )));
    }
    Ok(())
}

/// Per-row standardization over the last axis followed by `gain ⊙ · + bias`.
pub fn layer_norm<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    check_affine(x, gain, bias)?;
    let (mut xhat, _, d) = standardize(x)?;
    for row in xhat.chunks_mut(d) {
        for ((v, &g), &b) in row.iter_mut().zip(gain.data()).zip(bias.data()) {
            *v = *v * g + b;
        }
    }
    Tensor::from_vec(x.shape(), xhat)
}

struct LayerNormRule<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    dim: usize,
}

impl<T: Scalar> BackwardRule<T> for LayerNormRule<T> {
    fn name(&self) -> &'static str {
        "layer_norm"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &[T]) -> Vec<Vec<T>> {
        let gain = inputs[1].data();
        let d = self.dim;
        let inv_d = T::one() / T::from_usize_lossy(d);
        let mut gx = vec![T::zero(); grad_out.len()];
        let mut ggain = vec![T::zero(); d];
        let mut gbias = vec![T::zero(); d];
        for (r, (g, xh)) in grad_out.chunks(d).zip(self.xhat.chunks(d)).enumerate() {
            let mut mean_dxhat = T::zero();
            let mut mean_dxhat_xhat = T::zero();
            for j in 0..d {
                ggain[j] += g[j] * xh[j];
                gbias[j] += g[j];
                let dxhat = g[j] * gain[j];
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * xh[j];
            }
            mean_dxhat *= inv_d;
            mean_dxhat_xhat *= inv_d;
            let s = self.inv_std[r];
            for j in 0..d {
                gx[r * d + j] = s * (g[j] * gain[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
            }
        }
        vec![gx, ggain, gbias]
    }
}

pub fn layer_norm_op<T: Scalar>(tape: &mut Tape<T>, x: Var, gain: Var, bias: Var) -> Result<Var> {
    let (xv, gv, bv) = (tape.value(x), tape.value(gain), tape.value(bias));
    check_affine(xv, gv, bv)?;
    let (xhat, inv_std, dim) = standardize(xv)?;
    let mut out = xhat.clone();
    for row in out.chunks_mut(dim) {
        for ((v, &g), &b) in row.iter_mut().zip(gv.data()).zip(bv.data()) {
            *v = *v * g + b;
        }
    }
    let out = Tensor::from_vec(xv.shape(), out)?;
    tape.custom(&[x, gain, bias], out, Box::new(LayerNormRule { xhat, inv_std, dim }))
}

/// Tape handles of a two-layer feed-forward `dim → hidden → dim`.
#[derive(Debug, Clone, Copy)]
pub struct FeedForwardParams {
    pub fc1_weight: Var,
    pub fc1_bias: Var,
    pub fc2_weight: Var,
    pub fc2_bias: Var,
}

/// `linear(dim→hidden) → GELU → linear(hidden→dim)` along the last axis.
pub fn feed_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &FeedForwardParams) -> Result<Var> {
    let dim = tape.value(p.fc1_weight).shape()[0];
    let last = tape.value(x).shape().last().copied();
    if last != Some(dim) {
        return Err(Error::Shape(format!(
            "feed_forward expects last axis {dim}, got shape {:?}",
            tape.value(x).shape()
        )));
    }
    let h = tape.linear(x, p.fc1_weight, p.fc1_bias)?;
    let h = tape.gelu(h)?;
    tape.linear(h, p.fc2_weight, p.fc2_bias)
}
