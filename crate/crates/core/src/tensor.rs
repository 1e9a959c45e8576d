//! Dense 4-D tensors over `f32`/`f64` and the gemm primitive behind every
//! convolution.
//!
//! Shapes are always `(batch, channels, height, width)`; vectors such as
//! biases are stored as `(1, c, 1, 1)` and scalars as `(1, 1, 1, 1)`.
//! Training runs on `f32`; the finite-difference gradient suite instantiates
//! the same code at `f64`.

use num_traits::{Float, NumAssign};

/// Scalar types the numeric core is generic over.
pub trait Element:
    Float + NumAssign + Copy + Send + Sync + Default + std::fmt::Debug + std::fmt::Display + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// General `c = alpha * a @ b + beta * c` with explicit row/column
    /// strides, so transposed views need no copies.
    #[allow(clippy::too_many_arguments)]
    fn gemm_strided(
        m: usize, k: usize, n: usize,
        alpha: Self,
        a: &[Self], rsa: isize, csa: isize,
        b: &[Self], rsb: isize, csb: isize,
        beta: Self,
        c: &mut [Self], rsc: isize, csc: isize,
    );

    /// Row-major `c = alpha * a @ b + beta * c` with `a: (m, k)`, `b: (k, n)`.
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        Self::gemm_strided(m, k, n, alpha, a, k as isize, 1, b, n as isize, 1, beta, c, n as isize, 1);
    }
}

impl Element for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn gemm_strided(
        m: usize, k: usize, n: usize,
        alpha: f32,
        a: &[f32], rsa: isize, csa: isize,
        b: &[f32], rsb: isize, csb: isize,
        beta: f32,
        c: &mut [f32], rsc: isize, csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len(), rsc, csc);
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha,
                a.as_ptr(), rsa, csa,
                b.as_ptr(), rsb, csb,
                beta,
                c.as_mut_ptr(), rsc, csc,
            );
        }
    }
}

impl Element for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn gemm_strided(
        m: usize, k: usize, n: usize,
        alpha: f64,
        a: &[f64], rsa: isize, csa: isize,
        b: &[f64], rsb: isize, csb: isize,
        beta: f64,
        c: &mut [f64], rsc: isize, csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len(), rsc, csc);
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha,
                a.as_ptr(), rsa, csa,
                b.as_ptr(), rsb, csb,
                beta,
                c.as_mut_ptr(), rsc, csc,
            );
        }
    }
}

/// Highest linear index each operand touches must stay in bounds.
#[allow(clippy::too_many_arguments)]
fn check_gemm_bounds(
    m: usize, k: usize, n: usize,
    a_len: usize, rsa: isize, csa: isize,
    b_len: usize, rsb: isize, csb: isize,
    c_len: usize, rsc: isize, csc: isize,
) {
    let max_index = |rows: usize, cols: usize, rs: isize, cs: isize| -> usize {
        let r = (rows as isize - 1).max(0);
        let c = (cols as isize - 1).max(0);
        (r * rs.max(0) + c * cs.max(0)) as usize
    };
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!(rsa >= 0 && csa >= 0 && rsb >= 0 && csb >= 0 && rsc >= 0 && csc >= 0);
    assert!(max_index(m, k, rsa, csa) < a_len, "gemm operand a out of bounds");
    assert!(max_index(k, n, rsb, csb) < b_len, "gemm operand b out of bounds");
    assert!(max_index(m, n, rsc, csc) < c_len, "gemm operand c out of bounds");
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: [usize; 4], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor { shape, data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn full(shape: [usize; 4], value: T) -> Self {
        Tensor { shape, data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: [1, 1, 1, 1], data: vec![value] }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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

    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        let [_, ch, h, w] = self.shape;
        self.data[((b * ch + c) * h + y) * w + x]
    }

    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: T) {
        let [_, ch, h, w] = self.shape;
        self.data[((b * ch + c) * h + y) * w + x] = v;
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect() }
    }

    /// Concatenate along the batch dimension; all inputs must agree on the
    /// remaining dimensions.
    pub fn cat_batch(parts: &[&Tensor<T>]) -> Self {
        assert!(!parts.is_empty());
        let [_, c, h, w] = parts[0].shape;
        let total: usize = parts.iter().map(|p| p.batch()).sum();
        let mut data = Vec::with_capacity(total * c * h * w);
        for p in parts {
            assert_eq!([p.channels(), p.height(), p.width()], [c, h, w]);
            data.extend_from_slice(&p.data);
        }
        Tensor { shape: [total, c, h, w], data }
    }

    /// Single batch item `b` as a `(1, c, h, w)` tensor.
    pub fn slice_batch(&self, b: usize) -> Tensor<T> {
        let [_, c, h, w] = self.shape;
        let stride = c * h * w;
        Tensor { shape: [1, c, h, w], data: self.data[b * stride..(b + 1) * stride].to_vec() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let a: Vec<f64> = (0..6).map(|i| i as f64 + 0.5).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect(); // 3x4
        let mut c = vec![0.0f64; 8];
        f64::gemm(2, 3, 4, 1.0, &a, &b, 0.0, &mut c);
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                assert!((c[i * 4 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cat_and_slice_roundtrip() {
        let a = Tensor::<f32>::full([1, 2, 2, 2], 1.0);
        let b = Tensor::<f32>::full([2, 2, 2, 2], 2.0);
        let c = Tensor::cat_batch(&[&a, &b]);
        assert_eq!(c.shape(), [3, 2, 2, 2]);
        assert_eq!(c.slice_batch(0), a);
        assert_eq!(c.slice_batch(2).data()[0], 2.0);
    }
}
