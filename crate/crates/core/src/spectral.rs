//! Discrete Fourier transforms with fixed conventions.
//!
//! Forward transforms are unnormalized with kernel `exp(-2πi·kt/n)`; inverses
//! carry the `1/n` factor. The Hermitian pair (`hfft`, `irfft`) maps a real
//! half spectrum to a real signal of any requested length `n`, trimming or
//! zero-padding the input to `n/2 + 1` coefficients first.

use std::f64::consts::PI;

use num_complex::{Complex, Complex64};

use crate::autodiff::{BackwardRule, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// O(n²) DFT by definition: `X_k = Σ_j x_j·exp(sign·2πi·jk/n)`.
pub fn dft_naive(x: &[Complex64], sign: i32) -> Vec<Complex64> {
    let n = x.len();
    let s = sign.signum() as f64;
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| {
                    // Reduce jk mod n before scaling so large n keeps full precision.
                    let phase = ((j * k) % n) as f64 / n as f64;
                    v * Complex64::from_polar(1.0, s * 2.0 * PI * phase)
                })
                .sum()
        })
        .collect()
}

/// Precomputed complex FFT of one length.
///
/// Powers of two use an iterative radix-2 kernel; every other length goes
/// through Bluestein's chirp-z convolution on a power-of-two grid.
#[derive(Debug, Clone)]
pub struct Fft<T> {
    n: usize,
    kind: FftKind<T>,
}

#[derive(Debug, Clone)]
enum FftKind<T> {
    Trivial,
    Radix2 { twiddles: Vec<Complex<T>> },
    Bluestein { chirp: Vec<Complex<T>>, kernel_spectrum: Vec<Complex<T>>, inner: Box<Fft<T>> },
}

fn cis<T: Scalar>(angle: f64) -> Complex<T> {
    Complex::new(T::from_f64_lossy(angle.cos()), T::from_f64_lossy(angle.sin()))
}

impl<T: Scalar> Fft<T> {
    pub fn new(n: usize) -> Self {
        let kind = if n <= 1 {
            FftKind::Trivial
        } else if n.is_power_of_two() {
            // exp(-2πi·j/n) for j < n/2; the inverse conjugates on the fly.
            let twiddles = (0..n / 2).map(|j| cis(-2.0 * PI * j as f64 / n as f64)).collect();
            FftKind::Radix2 { twiddles }
        } else {
            let size = (2 * n - 1).next_power_of_two();
            let inner = Fft::new(size);
            // chirp_j = exp(-πi·j²/n), with j² reduced mod 2n.
            let chirp: Vec<Complex<T>> =
                (0..n).map(|j| cis(-PI * ((j * j) % (2 * n)) as f64 / n as f64)).collect();
            let mut kernel = vec![Complex::new(T::zero(), T::zero()); size];
            kernel[0] = chirp[0].conj();
            for j in 1..n {
                kernel[j] = chirp[j].conj();
                kernel[size - j] = chirp[j].conj();
            }
            inner.process(&mut kernel, -1);
            FftKind::Bluestein { chirp, kernel_spectrum: kernel, inner: Box::new(inner) }
        };
        Fft { n, kind }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place unnormalized transform with kernel `exp(sign·2πi·jk/n)`.
    pub fn process(&self, buf: &mut [Complex<T>], sign: i32) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        match &self.kind {
            FftKind::Trivial => {}
            FftKind::Radix2 { twiddles } => radix2(buf, twiddles, sign < 0),
            FftKind::Bluestein { chirp, kernel_spectrum, inner } => {
                // For sign +1 use conj(FFT_-(conj x)).
                let forward = sign < 0;
                let size = inner.len();
                let mut work = vec![Complex::new(T::zero(), T::zero()); size];
                for j in 0..self.n {
                    let x = if forward { buf[j] } else { buf[j].conj() };
                    work[j] = x * chirp[j];
                }
                inner.process(&mut work, -1);
                for (w, k) in work.iter_mut().zip(kernel_spectrum) {
                    *w *= *k;
                }
                inner.process(&mut work, 1);
                let scale = T::one() / T::from_usize_lossy(size);
                for k in 0..self.n {
                    let v = work[k] * chirp[k] * scale;
                    buf[k] = if forward { v } else { v.conj() };
                }
            }
        }
    }
}

fn radix2<T: Scalar>(buf: &mut [Complex<T>], twiddles: &[Complex<T>], forward: bool) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for j in 0..half {
                let w = twiddles[j * stride];
                let w = if forward { w } else { w.conj() };
                let u = buf[start + j];
                let v = buf[start + j + half] * w;
                buf[start + j] = u + v;
                buf[start + j + half] = u - v;
            }
        }
        len <<= 1;
    }
}

/// Complex FFT of any length; equals [`dft_naive`] up to rounding.
pub fn fft<T: Scalar>(x: &[Complex<T>], sign: i32) -> Vec<Complex<T>> {
    let mut buf = x.to_vec();
    Fft::new(x.len()).process(&mut buf, sign);
    buf
}

/// Which real linear transform a [`SpectralPlan`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Hfft,
    Ihfft,
    Rfft,
    Irfft,
}

/// Length bookkeeping for one transform: `n` is the signal length and
/// `m = n/2 + 1` the half-spectrum length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectralPlan {
    pub n: usize,
    pub m: usize,
    pub direction: Direction,
}

impl SpectralPlan {
    pub fn new(direction: Direction, n: usize) -> Result<Self> {
        let min = match direction {
            Direction::Hfft | Direction::Irfft => 2,
            Direction::Ihfft | Direction::Rfft => 1,
        };
        if n < min {
            return Err(Error::Length(format!("{direction:?} needs n >= {min}, got {n}")));
        }
        Ok(SpectralPlan { n, m: n / 2 + 1, direction })
    }

    /// Weight of half-spectrum bin `k` in the Hermitian extension: bins that
    /// have a mirrored partner count twice.
    fn bin_weight(&self, k: usize) -> f64 {
        if k == 0 || (self.n % 2 == 0 && k == self.n / 2) {
            1.0
        } else {
            2.0
        }
    }
}

fn hermitian_spectrum<T: Scalar>(half: &[Complex<T>], n: usize) -> Vec<Complex<T>> {
    let m = n / 2 + 1;
    let zero = Complex::new(T::zero(), T::zero());
    let mut ext = vec![zero; n];
    let kept = m.min(half.len());
    ext[..kept].copy_from_slice(&half[..kept]);
    // DC and (for even n) Nyquist must be real.
    ext[0].im = T::zero();
    if n % 2 == 0 {
        ext[n / 2].im = T::zero();
    }
    for k in 1..=(n - m) {
        ext[n - k] = ext[k].conj();
    }
    ext
}

fn l2<T: Scalar>(v: impl Iterator<Item = T>) -> f64 {
    v.map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

/// HFFT of a real half spectrum, also returning the largest imaginary
/// residue of the complex transform before it was discarded.
pub fn hfft_with_residue<T: Scalar>(y: &[T], n: usize) -> Result<(Vec<T>, f64)> {
    SpectralPlan::new(Direction::Hfft, n)?;
    let half: Vec<Complex<T>> = y.iter().map(|&v| Complex::new(v, T::zero())).collect();
    let mut ext = hermitian_spectrum(&half, n);
    Fft::new(n).process(&mut ext, -1);
    let residue = ext.iter().fold(0.0f64, |m, z| m.max(z.im.as_f64().abs()));
    Ok((ext.into_iter().map(|z| z.re).collect(), residue))
}

/// Hermitian FFT: real half spectrum `y` to a real signal of length `n`.
pub fn hfft<T: Scalar>(y: &[T], n: usize) -> Result<Vec<T>> {
    let (out, residue) = hfft_with_residue(y, n)?;
    debug_assert!(
        residue <= T::SPECTRAL_TOL * (l2(y.iter().copied()) + f64::MIN_POSITIVE),
        "hfft imaginary residue {residue} too large"
    );
    Ok(out)
}

/// Inverse of [`hfft`]: the first `n/2 + 1` bins of `(1/n)·Σ_t z_t·exp(+2πi·kt/n)`.
///
/// Returns complex bins; for signals produced by `hfft` of a real half
/// spectrum the imaginary parts vanish.
pub fn ihfft<T: Scalar>(z: &[T], n: usize) -> Result<Vec<Complex<T>>> {
    let plan = SpectralPlan::new(Direction::Ihfft, n)?;
    if z.len() != n {
        return Err(Error::Length(format!("ihfft: input has {} samples, expected {n}", z.len())));
    }
    let mut buf: Vec<Complex<T>> = z.iter().map(|&v| Complex::new(v, T::zero())).collect();
    Fft::new(n).process(&mut buf, 1);
    let inv = T::one() / T::from_usize_lossy(n);
    Ok(buf.into_iter().take(plan.m).map(|v| v * inv).collect())
}

/// First `n/2 + 1` bins of the forward DFT of a real signal.
pub fn rfft<T: Scalar>(x: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    Fft::new(x.len()).process(&mut buf, -1);
    buf.truncate(x.len() / 2 + 1);
    buf
}

/// Inverse real FFT of a (trimmed or zero-padded) half spectrum.
pub fn irfft<T: Scalar>(y: &[Complex<T>], n: usize) -> Result<Vec<T>> {
    SpectralPlan::new(Direction::Irfft, n)?;
    let mut ext = hermitian_spectrum(y, n);
    Fft::new(n).process(&mut ext, 1);
    let inv = T::one() / T::from_usize_lossy(n);
    Ok(ext.into_iter().map(|z| z.re * inv).collect())
}

/// [`irfft`] of a half spectrum with zero imaginary parts.
pub fn irfft_real<T: Scalar>(y: &[T], n: usize) -> Result<Vec<T>> {
    let half: Vec<Complex<T>> = y.iter().map(|&v| Complex::new(v, T::zero())).collect();
    irfft(&half, n)
}

/// Adjoint of the real linear map behind `hfft` or `irfft` for a real input
/// of length `input_len`: `Aᵀ·grad_out`, including the adjoint of the
/// trim/zero-pad step.
pub fn spectral_backward<T: Scalar>(
    direction: Direction,
    input_len: usize,
    n: usize,
    grad_out: &[T],
) -> Result<Vec<T>> {
    if !matches!(direction, Direction::Hfft | Direction::Irfft) {
        return Err(Error::Contract(format!("no real adjoint registered for {direction:?}")));
    }
    let plan = SpectralPlan::new(direction, n)?;
    if grad_out.len() != n {
        return Err(Error::Shape(format!("spectral_backward: gradient has {} entries, expected {n}", grad_out.len())));
    }
    let spectrum = rfft(grad_out);
    let scale = if direction == Direction::Irfft { 1.0 / n as f64 } else { 1.0 };
    let mut out = vec![T::zero(); input_len];
    for k in 0..plan.m.min(input_len) {
        out[k] = spectrum[k].re * T::from_f64_lossy(plan.bin_weight(k) * scale);
    }
    Ok(out)
}

/// Applies a real-to-real transform to every row along the last axis.
fn map_last_axis<T: Scalar>(x: &Tensor<T>, n: usize, f: impl Fn(&[T]) -> Result<Vec<T>>) -> Result<Tensor<T>> {
    let d = *x.shape().last().ok_or_else(|| Error::Rank("spectral op on a rank-0 tensor".into()))?;
    let mut out = Vec::with_capacity(x.len() / d * n);
    for row in x.data().chunks(d) {
        out.extend(f(row)?);
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Tensor::from_vec(&shape, out)
}

/// Row-wise `hfft(·, n)` along the last axis.
pub fn hfft_last_axis<T: Scalar>(x: &Tensor<T>, n: usize) -> Result<Tensor<T>> {
    SpectralPlan::new(Direction::Hfft, n)?;
    let fft = Fft::<T>::new(n);
    map_last_axis(x, n, |row| Ok(hermitian_real_transform(&fft, row, -1)))
}

/// Row-wise `irfft(·, n)` along the last axis, treating rows as real spectra.
pub fn irfft_last_axis<T: Scalar>(x: &Tensor<T>, n: usize) -> Result<Tensor<T>> {
    SpectralPlan::new(Direction::Irfft, n)?;
    let fft = Fft::<T>::new(n);
    let inv = T::one() / T::from_usize_lossy(n);
    map_last_axis(x, n, |row| Ok(hermitian_real_transform(&fft, row, 1).into_iter().map(|v| v * inv).collect()))
}

fn hermitian_real_transform<T: Scalar>(fft: &Fft<T>, row: &[T], sign: i32) -> Vec<T> {
    let half: Vec<Complex<T>> = row.iter().map(|&v| Complex::new(v, T::zero())).collect();
    let mut ext = hermitian_spectrum(&half, fft.len());
    fft.process(&mut ext, sign);
    ext.into_iter().map(|z| z.re).collect()
}

struct SpectralRule {
    direction: Direction,
    n: usize,
}

impl<T: Scalar> BackwardRule<T> for SpectralRule {
    fn name(&self) -> &'static str {
        match self.direction {
            Direction::Hfft => "hfft",
            _ => "irfft",
        }
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &[T]) -> Vec<Vec<T>> {
        let d = *inputs[0].shape().last().unwrap();
        let mut out = Vec::with_capacity(inputs[0].len());
        for g in grad_out.chunks(self.n) {
            out.extend(spectral_backward(self.direction, d, self.n, g).expect("validated in forward"));
        }
        vec![out]
    }
}

/// Records row-wise `hfft(·, n)` on the tape.
pub fn hfft_op<T: Scalar>(tape: &mut Tape<T>, x: Var, n: usize) -> Result<Var> {
    let out = hfft_last_axis(tape.value(x), n)?;
    tape.custom(&[x], out, Box::new(SpectralRule { direction: Direction::Hfft, n }))
}

/// Records row-wise `irfft(·, n)` on the tape.
pub fn irfft_op<T: Scalar>(tape: &mut Tape<T>, x: Var, n: usize) -> Result<Var> {
    let out = irfft_last_axis(tape.value(x), n)?;
    tape.custom(&[x], out, Box::new(SpectralRule { direction: Direction::Irfft, n }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{
        finite_difference_check, hermitian_extension, hfft_by_definition, irfft_by_definition, rfft_by_definition,
    };
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rvec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn cvec(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    fn max_cerr(a: &[Complex64], b: &[Complex64]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
    }

    #[test]
    fn naive_dft_basics() {
        let mut delta = vec![Complex64::new(0.0, 0.0); 6];
        delta[0] = Complex64::new(1.0, 0.0);
        for v in dft_naive(&delta, -1) {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let constant = vec![Complex64::new(2.5, 0.0); 5];
        let out = dft_naive(&constant, -1);
        assert!((out[0] - Complex64::new(12.5, 0.0)).norm() < 1e-12);
        assert!(out[1..].iter().all(|v| v.norm() < 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = cvec(7, &mut rng);
        let back: Vec<Complex64> = dft_naive(&dft_naive(&x, -1), 1).into_iter().map(|v| v / 7.0).collect();
        assert!(max_cerr(&back, &x) <= 1e-12);
    }

    #[test]
    fn fft_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = cvec(8, &mut rng);
        assert!(max_cerr(&fft(&x, -1), &dft_naive(&x, -1)) <= 1e-12);
        let x = cvec(768, &mut rng);
        assert!(max_cerr(&fft(&x, -1), &dft_naive(&x, -1)) <= 1e-9);
        assert!(max_cerr(&fft(&x, 1), &dft_naive(&x, 1)) <= 1e-9);
        let one = vec![Complex64::new(0.3, -0.2)];
        assert_eq!(fft(&one, -1), one);
        for n in [3, 5, 12, 17, 100] {
            let x = cvec(n, &mut rng);
            assert!(max_cerr(&fft(&x, 1), &dft_naive(&x, 1)) <= 1e-12, "n={n}");
        }
    }

    #[test]
    fn hfft_examples() {
        let mut delta = vec![0.0; 5];
        delta[0] = 1.0;
        assert!(max_err(&hfft(&delta, 8).unwrap(), &[1.0; 8]) < 1e-15);
        let mut dc = vec![0.0; 5];
        dc[0] = -1.75;
        assert!(max_err(&hfft(&dc, 8).unwrap(), &[-1.75; 8]) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = rvec(385, &mut rng);
        assert!(max_err(&hfft(&y, 768).unwrap(), &hfft_by_definition(&y, 768)) <= 1e-9);
        assert!(matches!(hfft(&y, 1), Err(Error::Length(_))));
    }

    #[test]
    fn hfft_trims_and_pads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let long = rvec(16, &mut rng);
        assert_eq!(hfft(&long, 16).unwrap(), hfft(&long[..9], 16).unwrap());
        let short = rvec(3, &mut rng);
        let mut padded = short.clone();
        padded.resize(9, 0.0);
        assert_eq!(hfft(&short, 16).unwrap(), hfft(&padded, 16).unwrap());
    }

    #[test]
    fn ihfft_examples() {
        let back = ihfft(&[1.0; 8], 8).unwrap();
        assert_eq!(back.len(), 5);
        assert!((back[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(back[1..].iter().all(|v| v.norm() < 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = rvec(5, &mut rng);
        let round = ihfft(&hfft(&y, 8).unwrap(), 8).unwrap();
        for (r, v) in round.iter().zip(&y) {
            assert!((r - Complex64::new(*v, 0.0)).norm() <= 1e-12);
        }
        assert!(ihfft(&[0.0; 8], 8).unwrap().iter().all(|v| v.norm() == 0.0));
        assert!(matches!(ihfft(&[0.0; 7], 8), Err(Error::Length(_))));
    }

    #[test]
    fn rfft_examples() {
        let out = rfft(&[0.5f64; 4]);
        assert_eq!(out.len(), 3);
        assert!((out[0] - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        assert!(out[1].norm() < 1e-15 && out[2].norm() < 1e-15);
        let mut delta = vec![0.0; 6];
        delta[0] = 1.0;
        assert!(rfft(&delta).iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rvec(16, &mut rng);
        assert!(max_cerr(&rfft(&x), &rfft_by_definition(&x)) <= 1e-12);
    }

    #[test]
    fn irfft_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rvec(12, &mut rng);
        assert!(max_err(&irfft(&rfft(&x), 12).unwrap(), &x) <= 1e-12);
        let mut dc = vec![0.0; 7];
        dc[0] = 3.0;
        assert!(max_err(&irfft_real(&dc, 12).unwrap(), &[0.25; 12]) < 1e-15);
        assert!(irfft_real(&[0.0; 7], 12).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(irfft_real(&[1.0], 1), Err(Error::Length(_))));

        let y = rvec(20, &mut rng);
        assert!(max_err(&irfft_real(&y, 30).unwrap(), &irfft_by_definition(&y, 30)) <= 1e-12);
    }

    #[test]
    fn irfft_ignores_imaginary_dc_and_nyquist() {
        let spec = vec![Complex64::new(1.0, 5.0), Complex64::new(0.5, 0.25), Complex64::new(-2.0, 9.0)];
        let clean = vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.25), Complex64::new(-2.0, 0.0)];
        assert_eq!(irfft(&spec, 4).unwrap(), irfft(&clean, 4).unwrap());
    }

    fn dense_matrix(direction: Direction, len: usize, n: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|j| {
                let mut e = vec![0.0; len];
                e[j] = 1.0;
                match direction {
                    Direction::Hfft => hfft(&e, n).unwrap(),
                    _ => irfft_real(&e, n).unwrap(),
                }
            })
            .collect()
    }

    #[test]
    fn adjoint_inner_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &(direction, len, n) in &[
            (Direction::Hfft, 6, 8),
            (Direction::Hfft, 16, 16),
            (Direction::Irfft, 9, 16),
            (Direction::Irfft, 12, 7),
            (Direction::Hfft, 2, 10),
        ] {
            let u = rvec(len, &mut rng);
            let v = rvec(n, &mut rng);
            let au = match direction {
                Direction::Hfft => hfft(&u, n).unwrap(),
                _ => irfft_real(&u, n).unwrap(),
            };
            let atv = spectral_backward(direction, len, n, &v).unwrap();
            let lhs: f64 = au.iter().zip(&v).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(&atv).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-10, "{direction:?} {len}->{n}: {lhs} vs {rhs}");

            // Column-by-column against the explicit matrix transpose.
            let cols = dense_matrix(direction, len, n);
            for j in 0..len {
                let want: f64 = cols[j].iter().zip(&v).map(|(a, b)| a * b).sum();
                assert!((want - atv[j]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn grad_through_hfft_at_zero_is_adjoint() {
        let g = vec![1.0, -2.0, 0.5, 0.0, 3.0, 1.0, -1.0, 2.0];
        let mut tape = Tape::new();
        let x = tape.param(Tensor::<f64>::zeros(&[1, 6]));
        let y = hfft_op(&mut tape, x, 8).unwrap();
        let w = tape.constant(Tensor::from_vec(&[1, 8], g.clone()).unwrap());
        let p = tape.mul(y, w).unwrap();
        let p = tape.reshape(p, &[8]).unwrap();
        let s = tape.reduce(p, 0, crate::tensor::ReduceKind::Sum).unwrap();
        tape.backward(s).unwrap();
        let want = spectral_backward(Direction::Hfft, 6, 8, &g).unwrap();
        assert_eq!(tape.grad(x).unwrap(), want.as_slice());
        assert!(want.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn spectral_ops_pass_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::from_vec(&[6], rvec(6, &mut rng)).unwrap();
        let w = Tensor::from_vec(&[8], rvec(8, &mut rng)).unwrap();
        let check = finite_difference_check(
            &[x, w],
            |tape, v| {
                let y = hfft_op(tape, v[0], 8)?;
                let y = tape.gelu(y)?;
                let y = irfft_op(tape, y, 8)?;
                let y = tape.mul(y, v[1])?;
                tape.reduce(y, 0, crate::tensor::ReduceKind::Sum)
            },
            1e-5,
        )
        .unwrap();
        assert!(check.max_rel_err <= 1e-6, "{check:?}");
    }

    #[test]
    fn spectral_backward_rejects_bad_shapes() {
        assert!(matches!(spectral_backward::<f64>(Direction::Hfft, 4, 8, &[0.0; 7]), Err(Error::Shape(_))));
        assert!(spectral_backward::<f64>(Direction::Rfft, 4, 8, &[0.0; 8]).is_err());
    }

    #[test]
    fn batched_rows_equal_looped_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Tensor::from_vec(&[2, 3, 10], rvec(60, &mut rng)).unwrap();
        let h = hfft_last_axis(&x, 10).unwrap();
        let r = irfft_last_axis(&x, 10).unwrap();
        assert_eq!(h.shape(), &[2, 3, 10]);
        for (i, row) in x.data().chunks(10).enumerate() {
            assert_eq!(&h.data()[i * 10..(i + 1) * 10], hfft(row, 10).unwrap().as_slice());
            assert_eq!(&r.data()[i * 10..(i + 1) * 10], irfft_real(row, 10).unwrap().as_slice());
        }
    }

    #[test]
    fn hermitian_extension_is_conjugate_symmetric() {
        let ext = hermitian_extension(&[1.0, 2.0, 3.0, 4.0, 5.0], 8);
        for k in 1..8 {
            assert_eq!(ext[k], ext[8 - k].conj());
        }
    }

    proptest! {
        #[test]
        fn hfft_is_linear_and_real(
            x in proptest::collection::vec(-1.0f64..1.0, 9),
            y in proptest::collection::vec(-1.0f64..1.0, 9),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = hfft(&combo, 16).unwrap();
            let hx = hfft(&x, 16).unwrap();
            let hy = hfft(&y, 16).unwrap();
            for t in 0..16 {
                prop_assert!((lhs[t] - (a * hx[t] + b * hy[t])).abs() <= 1e-10);
            }
            let (_, residue) = hfft_with_residue(&x, 16).unwrap();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(residue <= 1e-9 * norm + 1e-300);
        }

        #[test]
        fn inversion_pairs(x in proptest::collection::vec(-1.0f64..1.0, 2..40)) {
            let n = x.len();
            let back = irfft(&rfft(&x), n).unwrap();
            for t in 0..n {
                prop_assert!((back[t] - x[t]).abs() <= 1e-9);
            }
            let half = &x[..n / 2 + 1];
            let round = ihfft(&hfft(half, n).unwrap(), n).unwrap();
            for k in 0..half.len() {
                prop_assert!((round[k] - Complex64::new(half[k], 0.0)).norm() <= 1e-9);
            }
        }
    }
}
