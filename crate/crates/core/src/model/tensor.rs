//! Minimal dense row-major matrix used for parameters and activations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Glorot-uniform: `U(-s, s)` with `s = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..rows * cols).map(|_| T::lit(rng.random_range(-s..s))).collect();
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self (n x k) * other (k x m)`.
    pub fn matmul(&self, other: &Tensor<T>) -> Tensor<T> {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Tensor::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let o = out.row_mut(i);
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (oj, &b) in o.iter_mut().zip(other.row(k)) {
                    *oj = *oj + a * b;
                }
            }
        }
        out
    }

    /// `self (n x k) * other^T` for `other (m x k)`.
    pub fn matmul_t(&self, other: &Tensor<T>) -> Tensor<T> {
        debug_assert_eq!(self.cols, other.cols);
        let mut out = Tensor::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        out
    }

    /// `acc += self^T * other` for `self (n x k)`, `other (n x m)`, `acc (k x m)`.
    pub fn add_t_matmul_into(&self, other: &Tensor<T>, acc: &mut Tensor<T>) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!((acc.rows, acc.cols), (self.cols, other.cols));
        for n in 0..self.rows {
            let b = other.row(n);
            for (k, &a) in self.row(n).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (accj, &bj) in acc.row_mut(k).iter_mut().zip(b) {
                    *accj = *accj + a * bj;
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v = *v * s);
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// `y = W v` for `W (out x in)`.
pub fn matvec<T: Scalar>(w: &Tensor<T>, v: &[T]) -> Vec<T> {
    debug_assert_eq!(w.cols, v.len());
    (0..w.rows).map(|r| dot(w.row(r), v)).collect()
}

/// `y = W^T v` for `W (in x out)` given `v` of length `W.rows`.
pub fn matvec_t<T: Scalar>(w: &Tensor<T>, v: &[T]) -> Vec<T> {
    debug_assert_eq!(w.rows, v.len());
    let mut out = vec![T::zero(); w.cols];
    for (r, &vr) in v.iter().enumerate() {
        for (o, &wv) in out.iter_mut().zip(w.row(r)) {
            *o = *o + vr * wv;
        }
    }
    out
}

/// `acc += u v^T`.
pub fn add_outer<T: Scalar>(acc: &mut Tensor<T>, u: &[T], v: &[T]) {
    debug_assert_eq!((acc.rows, acc.cols), (u.len(), v.len()));
    for (r, &ur) in u.iter().enumerate() {
        for (a, &vc) in acc.row_mut(r).iter_mut().zip(v) {
            *a = *a + ur * vc;
        }
    }
}
