use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{invalid_arg, Result};

/// Element type of tensors and parameters (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    /// Tag written into checkpoints.
    const NAME: &'static str;

    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `C ← A·B + beta·C` for an `m × k` matrix `A`, a `k × n` matrix `B`
    /// and an `m × n` matrix `C`, each given as a slice with (row, column)
    /// strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_strides: (usize, usize),
    );
}

#[inline]
fn check_view(len: usize, rows: usize, cols: usize, (rs, cs): (usize, usize)) {
    if rows > 0 && cols > 0 {
        assert!(
            (rows - 1) * rs + (cols - 1) * cs < len,
            "matrix view out of bounds"
        );
    }
}

macro_rules! gemm_impl {
    ($kernel:path) => {
        fn gemm(
            m: usize,
            k: usize,
            n: usize,
            a: &[Self],
            a_strides: (usize, usize),
            b: &[Self],
            b_strides: (usize, usize),
            beta: Self,
            c: &mut [Self],
            c_strides: (usize, usize),
        ) {
            check_view(a.len(), m, k, a_strides);
            check_view(b.len(), k, n, b_strides);
            check_view(c.len(), m, n, c_strides);
            // SAFETY: every view was bounds-checked above and `c` does not
            // alias the inputs.
            unsafe {
                $kernel(
                    m,
                    k,
                    n,
                    1.0,
                    a.as_ptr(),
                    a_strides.0 as isize,
                    a_strides.1 as isize,
                    b.as_ptr(),
                    b_strides.0 as isize,
                    b_strides.1 as isize,
                    beta,
                    c.as_mut_ptr(),
                    c_strides.0 as isize,
                    c_strides.1 as isize,
                );
            }
        }
    };
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    gemm_impl!(matrixmultiply::sgemm);

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
    const NAME: &'static str = "f64";

    gemm_impl!(matrixmultiply::dgemm);

    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense rank-4 tensor in NHWC order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<R> {
    shape: [usize; 4],
    data: Vec<R>,
}

impl<R: Real> Tensor4<R> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![R::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<R>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(invalid_arg(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Self { shape, data })
    }

    /// Stack batch-1 (or larger) tensors along the batch axis.
    pub fn stack(parts: &[Tensor4<R>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| invalid_arg("cannot stack zero tensors"))?;
        let [_, h, w, c] = first.shape;
        let mut n = 0;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            if p.shape[1..] != [h, w, c] {
                return Err(invalid_arg("stacked tensors differ in shape"));
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            shape: [n, h, w, c],
            data,
        })
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn data(&self) -> &[R] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<R> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, t: usize, f: usize, c: usize) -> usize {
        ((n * self.shape[1] + t) * self.shape[2] + f) * self.shape[3] + c
    }

    #[inline]
    pub fn get(&self, n: usize, t: usize, f: usize, c: usize) -> R {
        self.data[self.index(n, t, f, c)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, t: usize, f: usize, c: usize, v: R) {
        let i = self.index(n, t, f, c);
        self.data[i] = v;
    }

    /// Channel vector of one spatial position.
    #[inline]
    pub fn pixel(&self, n: usize, t: usize, f: usize) -> &[R] {
        let i = self.index(n, t, f, 0);
        &self.data[i..i + self.shape[3]]
    }

    /// One sample of the batch as its own tensor.
    pub fn sample(&self, n: usize) -> Tensor4<R> {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        Tensor4 {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<S: Real>(&self) -> Tensor4<S> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|v| S::of(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(Tensor4::<f64>::from_vec([1, 2, 2, 1], vec![0.0; 3]).is_err());
        let t = Tensor4::<f64>::from_vec([1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get(0, 1, 0, 0), 3.0);
    }

    #[test]
    fn stack_and_sample_are_inverse() {
        let a = Tensor4::<f32>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor4::<f32>::from_vec([1, 1, 2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let s = Tensor4::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), [2, 1, 2, 2]);
        assert_eq!(s.sample(0), a);
        assert_eq!(s.sample(1), b);
    }
}
