//! Dense row-major tensors and the raw kernels behind the tape operations.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

/// Dense n-dimensional real array.
///
/// A rank-0 tensor (empty shape) holds exactly one element.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    pub requires_grad: bool,
    grad: Option<Vec<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Mean,
    Sum,
    Max,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        if numel(shape) != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {} elements, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data, requires_grad: false, grad: None })
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::from_vec(shape, vec![value; numel(shape)]).expect("full: invalid shape")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: Vec::new(), data: vec![value], requires_grad: false, grad: None }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| c(v)).collect())
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub(crate) fn accumulate_grad(&mut self, delta: &[T]) {
        debug_assert_eq!(delta.len(), self.data.len());
        match self.grad.as_mut() {
            Some(g) => g.iter_mut().zip(delta).for_each(|(g, &d)| *g += d),
            None => self.grad = Some(delta.to_vec()),
        }
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    /// Same tensor in another precision.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
            requires_grad: self.requires_grad,
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect()),
        }
    }

    pub fn reshape(&self, new_shape: &[usize]) -> Result<Self> {
        if new_shape.contains(&0) || numel(new_shape) != self.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) into {:?}",
                self.shape,
                self.len(),
                new_shape
            )));
        }
        Tensor::from_vec(new_shape, self.data.clone())
    }

    pub fn transpose_last2(&self) -> Result<Self> {
        let r = self.rank();
        if r < 2 {
            return Err(Error::Rank(format!("transpose_last2 needs rank >= 2, got shape {:?}", self.shape)));
        }
        let (a, b) = (self.shape[r - 2], self.shape[r - 1]);
        let mut out = vec![T::zero(); self.len()];
        transpose_batched(&self.data, &mut out, a, b);
        let mut shape = self.shape.clone();
        shape.swap(r - 2, r - 1);
        Tensor::from_vec(&shape, out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let dims = MatmulDims::infer(&self.shape, &other.shape)?;
        let mut out = vec![T::zero(); dims.batch * dims.m * dims.n];
        for bi in 0..dims.batch {
            let a = &self.data[bi * dims.m * dims.k..(bi + 1) * dims.m * dims.k];
            let boff = if dims.broadcast_b { 0 } else { bi * dims.k * dims.n };
            let b = &other.data[boff..boff + dims.k * dims.n];
            gemm_nn(a, b, &mut out[bi * dims.m * dims.n..(bi + 1) * dims.m * dims.n], dims.m, dims.k, dims.n);
        }
        Tensor::from_vec(&dims.out_shape(&self.shape), out)
    }

    fn zip_with(&self, other: &Self, what: &str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{what}: {:?} vs {:?}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Tensor::from_vec(&self.shape, data)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn gelu(&self) -> Self {
        self.map(gelu)
    }

    /// Adds a vector along the last axis.
    pub fn add_row(&self, row: &Self) -> Result<Self> {
        let d = *self.shape.last().ok_or_else(|| Error::Rank("add_row on a rank-0 tensor".into()))?;
        if row.shape != [d] {
            return Err(Error::Shape(format!("add_row: row {:?} against {:?}", row.shape, self.shape)));
        }
        let mut out = self.data.clone();
        for chunk in out.chunks_mut(d) {
            chunk.iter_mut().zip(&row.data).for_each(|(o, &b)| *o += b);
        }
        Tensor::from_vec(&self.shape, out)
    }

    pub fn reduce(&self, axis: usize, kind: ReduceKind) -> Result<Self> {
        Ok(self.reduce_with_argmax(axis, kind)?.0)
    }

    pub(crate) fn reduce_with_argmax(&self, axis: usize, kind: ReduceKind) -> Result<(Self, Vec<usize>)> {
        if axis >= self.rank() {
            return Err(Error::Axis { axis, rank: self.rank() });
        }
        let (outer, len, inner) = split_axis(&self.shape, axis);
        let mut out = vec![T::zero(); outer * inner];
        let mut arg = Vec::new();
        if kind == ReduceKind::Max {
            arg = vec![0usize; outer * inner];
        }
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| self.data[(o * len + j) * inner + i];
                let slot = o * inner + i;
                out[slot] = match kind {
                    ReduceKind::Sum => (0..len).map(at).sum(),
                    ReduceKind::Mean => (0..len).map(at).sum::<T>() / T::from_usize_lossy(len),
                    ReduceKind::Max => {
                        let mut best = 0;
                        for j in 1..len {
                            if at(j) > at(best) {
                                best = j;
                            }
                        }
                        arg[slot] = best;
                        at(best)
                    }
                };
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok((Tensor { shape, data: out, requires_grad: false, grad: None }, arg))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// Exact Gaussian-CDF GELU.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    c::<T>(0.5) * x * (T::one() + (x * T::FRAC_1_SQRT_2()).erf())
}

#[inline]
pub fn gelu_derivative<T: Scalar>(x: T) -> T {
    let cdf = c::<T>(0.5) * (T::one() + (x * T::FRAC_1_SQRT_2()).erf());
    let pdf = (-(x * x) * c(0.5)).exp() * c(0.5 * std::f64::consts::FRAC_2_SQRT_PI * std::f64::consts::FRAC_1_SQRT_2);
    cdf + x * pdf
}

/// (outer, axis extent, inner) strides for iterating around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MatmulDims {
    pub batch: usize,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub broadcast_b: bool,
}

impl MatmulDims {
    pub fn infer(a: &[usize], b: &[usize]) -> Result<Self> {
        let mismatch = || Error::Shape(format!("matmul: cannot multiply {a:?} by {b:?}"));
        if a.len() < 2 || b.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
        let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
        if k != k2 {
            return Err(mismatch());
        }
        let a_prefix = &a[..a.len() - 2];
        let b_prefix = &b[..b.len() - 2];
        let broadcast_b = b_prefix.is_empty();
        if !broadcast_b && a_prefix != b_prefix {
            return Err(mismatch());
        }
        Ok(MatmulDims { batch: numel(a_prefix), m, k, n, broadcast_b })
    }

    pub fn out_shape(&self, a: &[usize]) -> Vec<usize> {
        let mut s = a[..a.len() - 2].to_vec();
        s.extend([self.m, self.n]);
        s
    }
}

/// out[m×n] += a[m×k] · b[k×n]
pub(crate) fn gemm_nn<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// out[m×k] += g[m×n] · bᵀ where b is k×n
pub(crate) fn gemm_nt<T: Scalar>(g: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for (&x, &y) in grow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * k + p] += acc;
        }
    }
}

/// out[k×n] += aᵀ · g where a is m×k and g is m×n
pub(crate) fn gemm_tn<T: Scalar>(a: &[T], g: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

/// Transposes every trailing a×b matrix of `src` into `dst`.
pub(crate) fn transpose_batched<T: Copy>(src: &[T], dst: &mut [T], a: usize, b: usize) {
    let plane = a * b;
    for (s, d) in src.chunks(plane).zip(dst.chunks_mut(plane)) {
        for i in 0..a {
            for j in 0..b {
                d[j * a + i] = s[i * b + j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..numel(shape)).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let eye = Tensor::<f64>::from_f64(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let v = Tensor::from_f64(&[3, 1], &[4., -5., 6.]).unwrap();
        assert_eq!(eye.matmul(&v).unwrap(), v);

        let a = Tensor::<f64>::from_f64(&[2, 2], &[1., 2., 3., 4.]).unwrap();
        let b = Tensor::from_f64(&[2, 1], &[1., 1.]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[3., 7.]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = random(&[4, 5], 1);
        let b = random(&[5, 3], 2);
        let out = a.matmul(&b).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let mut acc = 0.0;
                for p in 0..5 {
                    acc += a.data()[i * 5 + p] * b.data()[p * 3 + j];
                }
                assert!((out.data()[i * 3 + j] - acc).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn matmul_batched_and_broadcast() {
        let a = random(&[2, 3, 4], 3);
        let b = random(&[4, 2], 4);
        let out = a.matmul(&b).unwrap();
        assert_eq!(out.shape(), &[2, 3, 2]);
        let second = Tensor::from_vec(&[3, 4], a.data()[12..].to_vec()).unwrap().matmul(&b).unwrap();
        assert_eq!(&out.data()[6..], second.data());

        let bb = random(&[2, 4, 2], 5);
        assert_eq!(a.matmul(&bb).unwrap().shape(), &[2, 3, 2]);
    }

    #[test]
    fn matmul_shape_errors_name_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[4, 2]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
        let c3 = Tensor::<f64>::zeros(&[3, 3, 2]);
        assert!(Tensor::<f64>::zeros(&[2, 2, 3]).matmul(&c3).is_err());
    }

    #[test]
    fn transpose_shape_involution_and_entries() {
        let x = random(&[2, 3, 4], 6);
        let t = x.transpose_last2().unwrap();
        assert_eq!(t.shape(), &[2, 4, 3]);
        assert_eq!(t.transpose_last2().unwrap(), x);

        let y = random(&[1, 2, 3], 7);
        let ty = y.transpose_last2().unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(ty.data()[j * 2 + i], y.data()[i * 3 + j]);
            }
        }
        assert!(matches!(Tensor::<f64>::zeros(&[3]).transpose_last2(), Err(Error::Rank(_))));
    }

    #[test]
    fn reshape_keeps_flat_order() {
        let x = Tensor::<f64>::zeros(&[1, 600, 768]);
        assert_eq!(x.reshape(&[1, 16, 150, 192]).unwrap().shape(), &[1, 16, 150, 192]);

        let y = random(&[2, 3], 8);
        assert_eq!(y.reshape(&[6]).unwrap().reshape(&[2, 3]).unwrap(), y);

        let z = Tensor::<f64>::from_vec(&[1, 4, 8], (0..32).map(f64::from).collect()).unwrap();
        let r = z.reshape(&[1, 16, 1, 2]).unwrap();
        for (i, v) in r.data().iter().enumerate() {
            assert_eq!(*v, i as f64);
        }
        assert!(matches!(y.reshape(&[4]), Err(Error::Shape(_))));
    }

    #[test]
    fn elementwise_basics() {
        assert_eq!(gelu(0.0f64), 0.0);
        // Reference value of 0.5·(1 + erf(1/√2)) at 40 digits.
        assert!((gelu(1.0f64) - 0.841_344_746_068_542_9).abs() <= 1e-12);
        assert!((gelu(-0.5f64) - (-0.154_268_769_362_993_45)).abs() <= 1e-12);
        assert!((gelu(2.5f64) - 2.484_475_836_685_559_7).abs() <= 1e-12);
        let x = random(&[3, 2], 9);
        assert_eq!(x.add(&Tensor::zeros(&[3, 2])).unwrap(), x);
        assert!(x.add(&Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.2] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_derivative(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn reductions() {
        let c = Tensor::<f64>::full(&[2, 5], 3.5);
        assert_eq!(c.reduce(1, ReduceKind::Mean).unwrap().data(), &[3.5, 3.5]);
        assert_eq!(Tensor::<f64>::ones(&[4]).reduce(0, ReduceKind::Sum).unwrap().item(), 4.0);

        let x = random(&[3, 5], 10);
        let m = x.reduce(1, ReduceKind::Mean).unwrap();
        for i in 0..3 {
            let mut acc = 0.0;
            for j in 0..5 {
                acc += x.data()[i * 5 + j];
            }
            assert!((m.data()[i] - acc / 5.0).abs() <= 1e-12);
        }
        let mx = x.reduce(0, ReduceKind::Max).unwrap();
        for j in 0..5 {
            let want = (0..3).map(|i| x.data()[i * 5 + j]).fold(f64::MIN, f64::max);
            assert_eq!(mx.data()[j], want);
        }
        assert!(matches!(x.reduce(2, ReduceKind::Sum), Err(Error::Axis { axis: 2, rank: 2 })));
    }

    #[test]
    fn finiteness_check() {
        let mut x = Tensor::<f32>::zeros(&[2]);
        assert!(x.check_finite("x").is_ok());
        x.data_mut()[1] = f32::NAN;
        assert!(matches!(x.check_finite("x"), Err(Error::NonFinite(_))));
    }
}
