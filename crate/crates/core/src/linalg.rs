//! Small dense kernels shared by the forward and backward passes.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! deployment and in `f64` for high-precision oracle checks.

use num_traits::{Float, FromPrimitive};

/// Scalar type for all model arithmetic.
pub trait Real:
    Float + FromPrimitive + std::iter::Sum + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn of_f64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap()
    }
    fn of_usize(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dot product with four accumulators. The split keeps a fixed, documented
/// summation order (deterministic across runs) while letting the compiler
/// vectorize.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut s0 = T::zero();
    let mut s1 = T::zero();
    let mut s2 = T::zero();
    let mut s3 = T::zero();
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        s0 = s0 + a[j] * b[j];
        s1 = s1 + a[j + 1] * b[j + 1];
        s2 = s2 + a[j + 2] * b[j + 2];
        s3 = s3 + a[j + 3] * b[j + 3];
    }
    for j in chunks * 4..a.len() {
        s0 = s0 + a[j] * b[j];
    }
    (s0 + s1) + (s2 + s3)
}

/// `out[i] = dot(w[i, :], x)` for a row-major `rows x cols` matrix.
pub fn matvec<T: Real>(w: &[T], x: &[T], rows: usize, cols: usize, out: &mut [T]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for i in 0..rows {
        out[i] = dot(&w[i * cols..(i + 1) * cols], x);
    }
}

/// `out += w^T * g`, i.e. `out[j] += sum_i w[i, j] * g[i]`.
pub fn matvec_t_acc<T: Real>(w: &[T], g: &[T], rows: usize, cols: usize, out: &mut [T]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(g.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for i in 0..rows {
        let gi = g[i];
        if gi == T::zero() {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        for j in 0..cols {
            out[j] = out[j] + row[j] * gi;
        }
    }
}

/// Rank-one update `dw[i, j] += g[i] * x[j]`.
pub fn outer_acc<T: Real>(dw: &mut [T], g: &[T], x: &[T]) {
    debug_assert_eq!(dw.len(), g.len() * x.len());
    let cols = x.len();
    for i in 0..g.len() {
        let gi = g[i];
        if gi == T::zero() {
            continue;
        }
        let row = &mut dw[i * cols..(i + 1) * cols];
        for j in 0..cols {
            row[j] = row[j] + gi * x[j];
        }
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Numerically stable softmax (max-shifted).
pub fn softmax_in_place<T: Real>(v: &mut [T]) {
    let max = v.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum = sum + *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

/// `log(sum(exp(v)))` without overflow.
pub fn log_sum_exp<T: Real>(v: &[T]) -> T {
    let max = v.iter().cloned().fold(T::neg_infinity(), T::max);
    let sum: T = v.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..13).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..13).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn matvec_and_transpose_agree() {
        // (w^T g) . x == g . (w x)
        let w: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).cos()).collect();
        let x = vec![0.3, -1.2, 2.0, 0.5];
        let g = vec![1.0, -0.5, 0.25];
        let mut wx = vec![0.0; 3];
        matvec(&w, &x, 3, 4, &mut wx);
        let mut wtg = vec![0.0; 4];
        matvec_t_acc(&w, &g, 3, 4, &mut wtg);
        let lhs: f64 = wtg.iter().zip(&x).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.iter().zip(&wx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut v = vec![1.0f64, 2.0, -3.0, 0.5];
        softmax_in_place(&mut v);
        let s: f64 = v.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(v.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn log_sum_exp_handles_large_logits() {
        let v = vec![1000.0f64, 1000.0];
        let got = log_sum_exp(&v);
        assert!((got - (1000.0 + 2.0f64.ln())).abs() < 1e-9);
    }
}
