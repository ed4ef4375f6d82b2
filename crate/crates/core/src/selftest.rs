//! Self-verification suite: fast transforms against the naive DFT, roll
//! against the per-cell oracle, tape gradients against central differences,
//! and metrics against their brute-force definitions.
//!
//! The gradient harnesses are public so test suites can run them at other
//! sizes.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::mixer::blocks::{apply_branch, BranchKind, BranchParams, MixingBranchConfig};
use crate::mixer::layers::{feed_forward, layer_norm_op, FeedForwardParams};
use crate::mixer::roll::{roll, roll_inverse, RollConfig};
use crate::mixer::{Bindings, Model, ModelConfig, Variant};
use crate::oracle::{
    finite_difference_check, hfft_by_definition, ihfft_by_definition, irfft_complex_by_definition, pairwise_auc,
    rfft_by_definition, roll_by_cells, FdCheck,
};
use crate::spectral::{ihfft, irfft, rfft};
use crate::tensor::{ReduceKind, Tensor};
use crate::train::{binary_auc, cross_entropy};

/// Signature of the Hermitian FFT under test.
pub type HfftFn = fn(&[f64], usize) -> Result<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed error (0 for exact properties that hold).
    pub worst: f64,
    pub tolerance: f64,
}

impl PropertyResult {
    fn within(name: &'static str, worst: f64, tolerance: f64) -> Self {
        PropertyResult { name, passed: worst <= tolerance, worst, tolerance }
    }
}

/// Transform sizes: every n in 2..=64 plus non-power-of-two sizes used by
/// full-scale models.
pub fn spectral_sizes() -> Vec<usize> {
    (2..=64).chain([385, 600, 768]).collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn max_abs_c(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

/// Largest deviation of each fast transform from its DFT construction:
/// `[hfft, ihfft, rfft, irfft]`.
pub fn spectral_oracle_errors(hfft: HfftFn, sizes: &[usize], trials: usize, seed: u64) -> Result<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    for &n in sizes {
        let m = n / 2 + 1;
        for _ in 0..trials {
            let half = random_vec(&mut rng, m);
            worst[0] = worst[0].max(max_abs(&hfft(&half, n)?, &hfft_by_definition(&half, n)));
            let signal = random_vec(&mut rng, n);
            worst[1] = worst[1].max(max_abs_c(&ihfft(&signal, n)?, &ihfft_by_definition(&signal)));
            worst[2] = worst[2].max(max_abs_c(&rfft(&signal), &rfft_by_definition(&signal)));
            let spec: Vec<Complex64> = (0..m).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            worst[3] = worst[3].max(max_abs(&irfft(&spec, n)?, &irfft_complex_by_definition(&spec, n)));
        }
    }
    Ok(worst)
}

/// Largest deviation from identity of `ihfft∘hfft` and `irfft∘rfft` over
/// `count` random sequences with lengths drawn from `sizes`.
pub fn inversion_errors(hfft: HfftFn, sizes: &[usize], count: usize, seed: u64) -> Result<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 2];
    for i in 0..count {
        let n = sizes[i % sizes.len()];
        let half = random_vec(&mut rng, n / 2 + 1);
        let back = ihfft(&hfft(&half, n)?, n)?;
        let want: Vec<Complex64> = half.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        worst[0] = worst[0].max(max_abs_c(&back, &want));
        let x = random_vec(&mut rng, n);
        worst[1] = worst[1].max(max_abs(&irfft(&rfft(&x), n)?, &x));
    }
    Ok(worst)
}

/// Roll checks over every `alpha < depth ≤ max_depth` on `[B, H, W]` inputs.
/// Returns the number of mismatches against the oracle, against the
/// inverse, and in multiset/norm preservation.
pub fn roll_mismatches(max_depth: usize, shapes: &[[usize; 3]], seed: u64) -> Result<[usize; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = [0usize; 3];
    for depth in 1..=max_depth {
        for alpha in 0..depth {
            let cfg = RollConfig::new(alpha, depth)?;
            for &[b, h, w] in shapes {
                let x = Tensor::from_vec(&[b, h, w], random_vec(&mut rng, b * h * w))?;
                let y = roll(&x, &cfg)?;
                if y.data() != roll_by_cells(x.data(), b, h, w, &cfg).as_slice() {
                    bad[0] += 1;
                }
                if roll_inverse(&y, &cfg)?.data() != x.data() {
                    bad[1] += 1;
                }
                let mut xs = x.data().to_vec();
                let mut ys = y.data().to_vec();
                xs.sort_by(f64::total_cmp);
                ys.sort_by(f64::total_cmp);
                // Sorted equality makes the sums of squares equal term by term.
                let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
                if xs != ys || norm(&xs) != norm(&ys) {
                    bad[2] += 1;
                }
            }
        }
    }
    Ok(bad)
}

fn weighted_sum(tape: &mut Tape<f64>, y: Var, w: Var) -> Result<Var> {
    let p = tape.mul(y, w)?;
    let n = tape.value(p).len();
    let p = tape.reshape(p, &[n])?;
    tape.reduce(p, 0, ReduceKind::Sum)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_vec(shape, random_vec(rng, shape.iter().product())).expect("positive shape")
}

const FD_STEP: f64 = 1e-5;

/// Layer norm on `[B, S, D]` against a random linear functional.
pub fn layer_norm_check(shape: [usize; 3], seed: u64) -> Result<FdCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = shape[2];
    let inputs = [
        random_tensor(&mut rng, &shape),
        random_tensor(&mut rng, &[d]),
        random_tensor(&mut rng, &[d]),
        random_tensor(&mut rng, &shape),
    ];
    finite_difference_check(
        &inputs,
        |tape, v| {
            let y = layer_norm_op(tape, v[0], v[1], v[2])?;
            weighted_sum(tape, y, v[3])
        },
        FD_STEP,
    )
}

pub fn feed_forward_check(shape: [usize; 3], hidden: usize, seed: u64) -> Result<FdCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = shape[2];
    let inputs = [
        random_tensor(&mut rng, &shape),
        random_tensor(&mut rng, &[d, hidden]),
        random_tensor(&mut rng, &[hidden]),
        random_tensor(&mut rng, &[hidden, d]),
        random_tensor(&mut rng, &[d]),
        random_tensor(&mut rng, &shape),
    ];
    finite_difference_check(
        &inputs,
        |tape, v| {
            let p = FeedForwardParams { fc1_weight: v[1], fc1_bias: v[2], fc2_weight: v[3], fc2_bias: v[4] };
            let y = feed_forward(tape, v[0], &p)?;
            weighted_sum(tape, y, v[5])
        },
        FD_STEP,
    )
}

/// One residual branch with random parameters on `[B, S, D]` inputs.
pub fn branch_check(kind: BranchKind, shape: [usize; 3], hidden: usize, roll: &RollConfig, seed: u64) -> Result<FdCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [_, s, d] = shape;
    let dim = if kind.mixes_tokens() { s } else { d };
    let specs = MixingBranchConfig { dim, hidden, kind }.param_shapes("b", d);
    let mut inputs = vec![random_tensor(&mut rng, &shape), random_tensor(&mut rng, &shape)];
    inputs.extend(specs.iter().map(|(_, sh)| random_tensor(&mut rng, sh)));
    finite_difference_check(
        &inputs,
        |tape, v| {
            let b: Bindings = specs.iter().zip(&v[2..]).map(|((n, _), &var)| (n.clone(), var)).collect();
            let p = BranchParams::resolve(&b, "b")?;
            let y = apply_branch(tape, v[0], kind, &p, roll)?;
            weighted_sum(tape, y, v[1])
        },
        FD_STEP,
    )
}

/// Random model inputs and parameters, scaled so activations are not tiny.
fn model_inputs(cfg: &ModelConfig, seed: u64, rng: &mut ChaCha8Rng) -> Result<(Model<f64>, Vec<Tensor<f64>>)> {
    let model = Model::<f64>::new(cfg.clone(), seed)?;
    let mut params = Vec::new();
    for (name, t) in model.params().iter() {
        let t = if name.ends_with(".weight") {
            random_tensor(rng, t.shape()).scale(0.5)
        } else {
            random_tensor(rng, t.shape()).scale(0.1).add(t)?
        };
        params.push(t);
    }
    Ok((model, params))
}

/// One full block (both slots) of `cfg.variant` at index `block`.
pub fn block_check(cfg: &ModelConfig, block: usize, batch: usize, seed: u64) -> Result<FdCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, params) = model_inputs(cfg, seed, &mut rng)?;
    let names: Vec<String> = model.params().names().map(String::from).collect();
    let shape = [batch, cfg.seq_len, cfg.embed_dim];
    let mut inputs = vec![random_tensor(&mut rng, &shape), random_tensor(&mut rng, &shape)];
    // Only the block's own parameters enter the check.
    let prefix = format!("blocks.{block}.");
    let own: Vec<usize> = (0..names.len()).filter(|&i| names[i].starts_with(&prefix)).collect();
    inputs.extend(own.iter().map(|&i| params[i].clone()));
    finite_difference_check(
        &inputs,
        |tape, v| {
            let b: Bindings = own.iter().zip(&v[2..]).map(|(&i, &var)| (names[i].clone(), var)).collect();
            let y = model.block(tape, &b, v[0], block)?;
            weighted_sum(tape, y, v[1])
        },
        FD_STEP,
    )
}

/// Whole model, patches to logits, with every parameter perturbed.
pub fn model_check(cfg: &ModelConfig, batch: usize, seed: u64) -> Result<FdCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, params) = model_inputs(cfg, seed, &mut rng)?;
    let names: Vec<String> = model.params().names().map(String::from).collect();
    let mut inputs = vec![
        random_tensor(&mut rng, &[batch, cfg.seq_len, cfg.patch_dim]),
        random_tensor(&mut rng, &[batch, cfg.num_classes]),
    ];
    inputs.extend(params);
    finite_difference_check(
        &inputs,
        |tape, v| {
            let b: Bindings = names.iter().cloned().zip(v[2..].iter().copied()).collect();
            let y = model.forward(tape, &b, v[0])?;
            weighted_sum(tape, y, v[1])
        },
        FD_STEP,
    )
}

/// Two-block model with 8 tokens of width 16.
pub fn small_model_config(variant: Variant) -> ModelConfig {
    ModelConfig { seq_len: 8, embed_dim: 16, depth: 2, num_classes: 3, patch_dim: 4, variant, ..Default::default() }
}

/// Largest |rank AUC − pairwise AUC| over random instances (0 when exact).
pub fn auc_oracle_gap(instances: usize, max_len: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(2..=max_len);
        // Coarse score grid forces plenty of ties.
        let levels = rng.random_range(1..=12);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        match (binary_auc(&scores, &positive), pairwise_auc(&scores, &positive)) {
            (Some(a), Some(b)) if a == b => {}
            (None, None) => {}
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()).max(f64::MIN_POSITIVE),
            _ => worst = f64::INFINITY,
        }
    }
    worst
}

/// Largest |cross_entropy(uniform) − ln K| over a range of class counts.
pub fn uniform_cross_entropy_gap() -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 2..=64 {
        let labels: Vec<usize> = (0..5).map(|i| (i * 7) % k).collect();
        let z = Tensor::<f64>::full(&[5, k], -0.37 * k as f64);
        worst = worst.max((cross_entropy(&z, &labels)? - (k as f64).ln()).abs());
    }
    Ok(worst)
}

/// Runs every property against the given Hermitian FFT.
pub fn run_with(hfft: HfftFn) -> Result<Vec<PropertyResult>> {
    let sizes = spectral_sizes();
    let spectral = spectral_oracle_errors(hfft, &sizes, 10, 11)?;
    let inversion = inversion_errors(hfft, &sizes, 1000, 12)?;
    let roll_bad = roll_mismatches(12, &[[2, 8, 16], [1, 4, 8], [1, 16, 4]], 13)?;
    let roll_cfg = RollConfig::new(1, 3)?;
    let grad_tol = 1e-4;
    Ok(vec![
        PropertyResult::within("hfft matches naive DFT", spectral[0], 1e-9),
        PropertyResult::within("ihfft matches naive DFT", spectral[1], 1e-9),
        PropertyResult::within("rfft matches naive DFT", spectral[2], 1e-9),
        PropertyResult::within("irfft matches naive DFT", spectral[3], 1e-9),
        PropertyResult::within("ihfft∘hfft round trip (realness)", inversion[0], 1e-9),
        PropertyResult::within("irfft∘rfft round trip", inversion[1], 1e-9),
        PropertyResult::within("roll equals per-cell permutation", roll_bad[0] as f64, 0.0),
        PropertyResult::within("roll_inverse∘roll is identity", roll_bad[1] as f64, 0.0),
        PropertyResult::within("roll preserves multiset and norm", roll_bad[2] as f64, 0.0),
        PropertyResult::within("gradient: layer_norm", layer_norm_check([2, 4, 6], 14)?.max_rel_err, grad_tol),
        PropertyResult::within("gradient: feed_forward", feed_forward_check([2, 3, 5], 7, 15)?.max_rel_err, grad_tol),
        PropertyResult::within(
            "gradient: roll_time_mixing",
            branch_check(BranchKind::RollTime, [2, 4, 16], 12, &roll_cfg, 16)?.max_rel_err,
            grad_tol,
        ),
        PropertyResult::within(
            "gradient: hermit_frequency_mixing",
            branch_check(BranchKind::HermitFrequency, [2, 8, 6], 4, &roll_cfg, 17)?.max_rel_err,
            grad_tol,
        ),
        PropertyResult::within(
            "gradient: full model",
            model_check(&small_model_config(Variant::RollHermit), 2, 18)?.max_rel_err,
            grad_tol,
        ),
        PropertyResult::within("AUC rank statistic equals pairwise", auc_oracle_gap(200, 200, 19), 0.0),
        PropertyResult::within("cross-entropy of uniform logits is ln K", uniform_cross_entropy_gap()?, 1e-12),
    ])
}

/// The suite against the shipped transforms.
pub fn run_selftest() -> Result<Vec<PropertyResult>> {
    run_with(crate::spectral::hfft::<f64>)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::hermitian_extension;
    use crate::spectral::dft_naive;

    /// Hermitian FFT with the mirrored half negated instead of conjugated.
    fn sign_flipped_hfft(half: &[f64], n: usize) -> Result<Vec<f64>> {
        let mut ext = hermitian_extension(half, n);
        let m = n / 2 + 1;
        for k in 1..=(n - m) {
            ext[n - k] = -ext[n - k];
        }
        Ok(dft_naive(&ext, -1).iter().map(|z| z.re).collect())
    }

    #[test]
    fn shipped_build_passes() {
        let results = run_selftest().unwrap();
        let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert_eq!(results.len(), 16);
    }

    #[test]
    fn sign_error_in_hfft_is_caught() {
        let results = run_with(sign_flipped_hfft).unwrap();
        let by_name = |n: &str| results.iter().find(|r| r.name.starts_with(n)).unwrap().passed;
        assert!(!by_name("ihfft∘hfft round trip"));
        assert!(!by_name("hfft matches naive DFT"));
        assert!(by_name("rfft matches naive DFT"));
    }
}
