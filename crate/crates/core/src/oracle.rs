//! Independent reference computations used by the test suites and `selftest`.
//!
//! Nothing here shares code with the implementations it checks: roll is
//! re-derived per element, AUC by explicit pair counting, gradients by
//! central differences, and spectra through the O(n²) DFT.

use num_complex::Complex64;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::mixer::roll::RollConfig;
use crate::spectral::dft_naive;
use crate::tensor::Tensor;

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

/// Compares tape gradients of a scalar function against central differences
/// with step `h`, for every element of every input.
pub fn finite_difference_check<F>(inputs: &[Tensor<f64>], f: F, h: f64) -> Result<FdCheck>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;

    let mut report = FdCheck { max_rel_err: 0.0, max_abs_err: 0.0, checked: 0 };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = tape.grad(*var).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let abs = (numeric - analytic[j]).abs();
            let rel = abs / numeric.abs().max(analytic[j].abs()).max(1e-6);
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_rel_err = report.max_rel_err.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Roll computed one cell at a time: each input cell of a `[B, H, W]` tensor is
/// sent to its destination by following the channel-group shift rules on the
/// folded `(C, H/C_a, W·C_a/C)` view.
pub fn roll_by_cells(input: &[f64], batch: usize, height: usize, width: usize, cfg: &RollConfig) -> Vec<f64> {
    let (ch, ca) = (cfg.channels, cfg.height_folds);
    let rows = height / ca;
    let cols = width * ca / ch;
    let g = cfg.group_width();
    let step = cfg.step() as i64;
    let plane = rows * cols;

    let mut out = vec![0.0; input.len()];
    for b in 0..batch {
        for flat in 0..height * width {
            let c = flat / plane;
            let r = (flat % plane) / cols;
            let q = flat % cols;
            let group = c.checked_div(g).unwrap_or(usize::MAX);
            let (mut nr, mut nq) = (r as i64, q as i64);
            match group {
                0 => nq += step,
                1 => nq -= step,
                2 => nr += step,
                3 => nr -= step,
                _ => {}
            }
            let nr = nr.rem_euclid(rows as i64) as usize;
            let nq = nq.rem_euclid(cols as i64) as usize;
            let dest = c * plane + nr * cols + nq;
            out[b * height * width + dest] = input[b * height * width + flat];
        }
    }
    out
}

/// Mann–Whitney AUC by explicit comparison of every positive/negative pair;
/// ties count one half. `None` when either class is empty.
pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut wins2: u64 = 0;
    let (mut np, mut nn) = (0u64, 0u64);
    for (i, &pi) in positive.iter().enumerate() {
        if pi {
            np += 1;
        } else {
            nn += 1;
            continue;
        }
        for (j, &pj) in positive.iter().enumerate() {
            if pj {
                continue;
            }
            if scores[i] > scores[j] {
                wins2 += 2;
            } else if scores[i] == scores[j] {
                wins2 += 1;
            }
        }
    }
    if np == 0 || nn == 0 {
        return None;
    }
    Some((wins2 as f64 / 2.0) / (np as f64 * nn as f64))
}

/// Full length-`n` Hermitian extension of a real half spectrum, after the
/// trim/zero-pad to `n/2 + 1` coefficients.
pub fn hermitian_extension(half: &[f64], n: usize) -> Vec<Complex64> {
    let half: Vec<Complex64> = half.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    hermitian_extension_complex(&half, n)
}

/// Hermitian extension of a complex half spectrum. Imaginary parts of the DC
/// bin and, for even `n`, the Nyquist bin are dropped, since a real signal
/// cannot carry them.
pub fn hermitian_extension_complex(half: &[Complex64], n: usize) -> Vec<Complex64> {
    let m = n / 2 + 1;
    let mut adjusted = half.to_vec();
    adjusted.resize(m, Complex64::new(0.0, 0.0));
    adjusted[0].im = 0.0;
    if n % 2 == 0 {
        adjusted[m - 1].im = 0.0;
    }
    let mut ext = vec![Complex64::new(0.0, 0.0); n];
    ext[..m].copy_from_slice(&adjusted);
    for k in 1..=(n - m) {
        ext[n - k] = adjusted[k].conj();
    }
    ext
}

/// IRFFT of a complex half spectrum through the O(n²) DFT.
pub fn irfft_complex_by_definition(half: &[Complex64], n: usize) -> Vec<f64> {
    dft_naive(&hermitian_extension_complex(half, n), 1).iter().map(|z| z.re / n as f64).collect()
}

/// HFFT through the explicit Hermitian extension and the O(n²) DFT.
pub fn hfft_by_definition(half: &[f64], n: usize) -> Vec<f64> {
    dft_naive(&hermitian_extension(half, n), -1).iter().map(|z| z.re).collect()
}

/// IRFFT through the explicit Hermitian extension and the O(n²) DFT.
pub fn irfft_by_definition(half: &[f64], n: usize) -> Vec<f64> {
    dft_naive(&hermitian_extension(half, n), 1).iter().map(|z| z.re / n as f64).collect()
}

/// IHFFT by definition: the first `n/2 + 1` bins of the inverse DFT.
pub fn ihfft_by_definition(signal: &[f64]) -> Vec<Complex64> {
    let n = signal.len();
    let z: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_naive(&z, 1).into_iter().take(n / 2 + 1).map(|v| v / n as f64).collect()
}

/// RFFT by definition: the first `n/2 + 1` bins of the forward DFT.
pub fn rfft_by_definition(signal: &[f64]) -> Vec<Complex64> {
    let n = signal.len();
    let z: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_naive(&z, -1).into_iter().take(n / 2 + 1).collect()
}
