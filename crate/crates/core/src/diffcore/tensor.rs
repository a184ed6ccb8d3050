use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use super::DiffError;

/// Floating-point element type of the engine.
///
/// Production code runs on `f32`; gradient checks instantiate the same code
/// with `f64` so finite differences are not swamped by rounding.
pub trait Real:
    Float + Debug + Default + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor. Every differentiable op works on rank-2 tensors;
/// scalars are `1 × 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); len] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, DiffError> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(DiffError::Length { shape: shape.to_vec(), len: data.len() });
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, DiffError> {
        Self::from_vec(&[rows, cols], data)
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1, 1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    /// Row count of a rank-2 tensor (1 for rank-1 and rank-0 tensors).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols() + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: T) {
        let cols = self.cols();
        self.data[r * cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }
}

/// `a (m×k) · b (k×n)` with 64-bit accumulation.
pub(crate) fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Vec::with_capacity(m * n);
    let mut acc = vec![0f64; n];
    for i in 0..m {
        acc.iter_mut().for_each(|v| *v = 0.0);
        let arow = &a.data[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let av = av.as_f64();
            let brow = &b.data[p * n..(p + 1) * n];
            for (s, &bv) in acc.iter_mut().zip(brow) {
                *s += av * bv.as_f64();
            }
        }
        out.extend(acc.iter().map(|&v| T::of(v)));
    }
    Tensor { shape: vec![m, n], data: out }
}

/// `a (m×k) · bᵀ` where `b` is `n×k`.
pub(crate) fn matmul_nt<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let s: f64 = arow.iter().zip(brow).map(|(&x, &y)| x.as_f64() * y.as_f64()).sum();
            out.push(T::of(s));
        }
    }
    Tensor { shape: vec![m, n], data: out }
}

/// `aᵀ · b` where `a` is `k×m` and `b` is `k×n`.
pub(crate) fn matmul_tn<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (k, m, n) = (a.rows(), a.cols(), b.cols());
    let mut acc = vec![0f64; m * n];
    for p in 0..k {
        let arow = &a.data[p * m..(p + 1) * m];
        let brow = &b.data[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let av = av.as_f64();
            let dst = &mut acc[i * n..(i + 1) * n];
            for (s, &bv) in dst.iter_mut().zip(brow) {
                *s += av * bv.as_f64();
            }
        }
    }
    Tensor { shape: vec![m, n], data: acc.into_iter().map(T::of).collect() }
}
