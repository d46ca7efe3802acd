//! Dense row-major tensors over f32 (training) or f64 (gradient checking).

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Element type for all numeric kernels. f32 is the training dtype; f64 is
/// kept API-identical so gradient checks can run at full precision.
pub trait Scalar:
    Copy
    + PartialOrd
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    /// c = alpha * a @ b + beta * c for row-major 2D buffers.
    ///
    /// # Safety
    /// Caller guarantees the buffers hold at least m*k, k*n and m*n elements.
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        b: *const Self,
        beta: Self,
        c: *mut Self,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            #[inline]
            fn exp(self) -> Self {
                self.exp()
            }
            #[inline]
            fn ln(self) -> Self {
                self.ln()
            }
            #[inline]
            fn tanh(self) -> Self {
                self.tanh()
            }
            #[inline]
            fn abs(self) -> Self {
                self.abs()
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }

            unsafe fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                b: *const Self,
                beta: Self,
                c: *mut Self,
            ) {
                $gemm(
                    m,
                    k,
                    n,
                    alpha,
                    a,
                    k as isize,
                    1,
                    b,
                    n as isize,
                    1,
                    beta,
                    c,
                    n as isize,
                    1,
                )
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Dense row-major tensor. Most kernels treat tensors as 2D matrices
/// `[rows, cols]`; higher-rank shapes are carried for bookkeeping (e.g.
/// deconvolution planes) with the same flat layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} wants {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![T::ZERO; n] }
    }

    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![value; n] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    /// Standard normal entries scaled by `std`.
    pub fn randn(shape: Vec<usize>, std: f64, rng: &mut Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64(rng.next_normal() * std)).collect();
        Tensor { shape, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of the canonical 2D view (product of all but the last dim).
    pub fn rows(&self) -> usize {
        if self.shape.is_empty() {
            1
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    /// Columns of the canonical 2D view (the last dim).
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
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
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {} values to {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    pub fn scale_in_place(&mut self, k: T) {
        for a in self.data.iter_mut() {
            *a = *a * k;
        }
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|a| *a = value);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// self @ other for 2D views; self is [m,k], other [k,n].
    pub fn matmul(&self, other: &Tensor<T>) -> Tensor<T> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = Tensor::zeros(vec![m, n]);
        unsafe {
            T::gemm(m, k, n, T::ONE, self.data.as_ptr(), other.data.as_ptr(), T::ZERO, out.data.as_mut_ptr());
        }
        out
    }

    /// self^T @ other; self is [k,m], other [k,n] -> [m,n].
    pub fn matmul_tn(&self, other: &Tensor<T>) -> Tensor<T> {
        let (k, m) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul_tn inner dims {k} vs {k2}");
        let mut out = Tensor::zeros(vec![m, n]);
        unsafe {
            matmul_raw(
                m,
                k,
                n,
                self.data.as_ptr(),
                1,
                m as isize,
                other.data.as_ptr(),
                n as isize,
                1,
                out.data.as_mut_ptr(),
            );
        }
        out
    }

    /// self @ other^T; self is [m,k], other [n,k] -> [m,n].
    pub fn matmul_nt(&self, other: &Tensor<T>) -> Tensor<T> {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul_nt inner dims {k} vs {k2}");
        let mut out = Tensor::zeros(vec![m, n]);
        unsafe {
            matmul_raw(
                m,
                k,
                n,
                self.data.as_ptr(),
                k as isize,
                1,
                other.data.as_ptr(),
                1,
                k as isize,
                out.data.as_mut_ptr(),
            );
        }
        out
    }

    pub fn to_f64_tensor(&self) -> Tensor<f64> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|x| x.to_f64()).collect() }
    }

    pub fn from_f64_tensor(src: &Tensor<f64>) -> Tensor<T> {
        Tensor { shape: src.shape.clone(), data: src.data.iter().map(|&x| T::from_f64(x)).collect() }
    }
}

unsafe fn matmul_raw<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: *const T,
    rsa: isize,
    csa: isize,
    b: *const T,
    rsb: isize,
    csb: isize,
    c: *mut T,
) {
    // Strided gemm via small shim: gather into contiguous row-major then gemm
    // would cost copies; matrixmultiply supports arbitrary strides, so call
    // the generic kernels directly per dtype.
    generic_gemm(m, k, n, a, rsa, csa, b, rsb, csb, c);
}

unsafe fn generic_gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: *const T,
    rsa: isize,
    csa: isize,
    b: *const T,
    rsb: isize,
    csb: isize,
    c: *mut T,
) {
    use std::any::TypeId;
    if TypeId::of::<T>() == TypeId::of::<f32>() {
        matrixmultiply::sgemm(
            m, k, n, 1.0, a as *const f32, rsa, csa, b as *const f32, rsb, csb, 0.0,
            c as *mut f32, n as isize, 1,
        );
    } else if TypeId::of::<T>() == TypeId::of::<f64>() {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a as *const f64, rsa, csa, b as *const f64, rsb, csb, 0.0,
            c as *mut f64, n as isize, 1,
        );
    } else {
        unreachable!("Scalar is only implemented for f32/f64");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_naive() {
        let mut rng = Rng::new(1);
        let a = Tensor::<f64>::randn(vec![3, 4], 1.0, &mut rng);
        let b = Tensor::<f64>::randn(vec![4, 5], 1.0, &mut rng);
        let c = a.matmul(&b);
        for i in 0..3 {
            for j in 0..5 {
                let mut acc = 0.0;
                for l in 0..4 {
                    acc += a.data()[i * 4 + l] * b.data()[l * 5 + j];
                }
                assert!((c.data()[i * 5 + j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_variants_agree() {
        let mut rng = Rng::new(2);
        let a = Tensor::<f64>::randn(vec![4, 3], 1.0, &mut rng);
        let b = Tensor::<f64>::randn(vec![4, 5], 1.0, &mut rng);
        // a^T @ b == transpose-first then matmul
        let tn = a.matmul_tn(&b);
        let mut at = Tensor::<f64>::zeros(vec![3, 4]);
        for i in 0..4 {
            for j in 0..3 {
                at.data_mut()[j * 4 + i] = a.data()[i * 3 + j];
            }
        }
        let want = at.matmul(&b);
        for (x, y) in tn.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        // a @ b^T == matmul against explicit transpose
        let c = Tensor::<f64>::randn(vec![5, 3], 1.0, &mut rng);
        let nt = at.matmul_nt(&at); // [3,4] @ [3,4]^T -> [3,3]
        let mut att = Tensor::<f64>::zeros(vec![4, 3]);
        for i in 0..3 {
            for j in 0..4 {
                att.data_mut()[j * 3 + i] = at.data()[i * 4 + j];
            }
        }
        let want2 = at.matmul(&att);
        for (x, y) in nt.data().iter().zip(want2.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let _ = c;
    }

    #[test]
    fn shape_validation() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }
}
