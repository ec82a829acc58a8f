//! Floating point element types.
//!
//! Everything numeric in the crate is generic over [`Scalar`]. `f32` is the
//! working precision for training and inference; `f64` exists for gradient
//! checking and metric computation.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Row/column strides of a dense matrix view, in elements.
#[derive(Clone, Copy, Debug)]
pub struct Strides {
    pub row: usize,
    pub col: usize,
}

impl Strides {
    /// Row-major layout with `cols` columns.
    pub fn row_major(cols: usize) -> Self {
        Strides { row: cols, col: 1 }
    }

    /// The transpose of a row-major matrix with `cols` columns.
    pub fn transposed(cols: usize) -> Self {
        Strides { row: 1, col: cols }
    }

    fn extent(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * self.row + (cols - 1) * self.col + 1
        }
    }
}

pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Send + Sync + 'static
{
    /// `c = a · b` (or `c += a · b` when `accumulate`), with `a` m×k and `b` k×n.
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        sa: Strides,
        b: &[Self],
        sb: Strides,
        c: &mut [Self],
        accumulate: bool,
    );

    /// Little-endian 32-bit encoding used by every file format in the crate.
    fn to_f32(self) -> f32 {
        ToPrimitive::to_f32(&self).unwrap_or(f32::NAN)
    }

    fn from_f32(v: f32) -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn lit(v: f64) -> Self {
        Self::from_f64_lossy(v)
    }
}

#[allow(clippy::too_many_arguments)]
fn check_gemm<T>(m: usize, k: usize, n: usize, a: &[T], sa: Strides, b: &[T], sb: Strides, c: &[T]) {
    assert!(sa.extent(m, k) <= a.len(), "gemm: lhs view out of bounds");
    assert!(sb.extent(k, n) <= b.len(), "gemm: rhs view out of bounds");
    assert!(m * n <= c.len(), "gemm: output view out of bounds");
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                sa: Strides,
                b: &[Self],
                sb: Strides,
                c: &mut [Self],
                accumulate: bool,
            ) {
                check_gemm(m, k, n, a, sa, b, sb, c);
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    if !accumulate {
                        c[..m * n].iter_mut().for_each(|v| *v = 0.0);
                    }
                    return;
                }
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: every view was bounds-checked against its slice above and
                // `c` does not alias `a` or `b` (distinct borrows).
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        sa.row as isize,
                        sa.col as isize,
                        b.as_ptr(),
                        sb.row as isize,
                        sb.col as isize,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn from_f32(v: f32) -> Self {
                v as $t
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..6).map(|v| (v as f64) * 0.5).collect(); // 3x2
        let mut c = vec![0.0; 4];
        f64::gemm_raw(
            2,
            3,
            2,
            &a,
            Strides::row_major(3),
            &b,
            Strides::row_major(2),
            &mut c,
            false,
        );
        assert_eq!(c, vec![5.0, 6.5, 14.0, 20.0]);

        // aᵀ·a via a transposed view: 3x3
        let mut d = vec![0.0; 9];
        f64::gemm_raw(
            3,
            2,
            3,
            &a,
            Strides::transposed(3),
            &a,
            Strides::row_major(3),
            &mut d,
            false,
        );
        assert_eq!(d[0], 9.0);
        assert_eq!(d[4], 1.0 + 16.0);

        f64::gemm_raw(
            2,
            3,
            2,
            &a,
            Strides::row_major(3),
            &b,
            Strides::row_major(2),
            &mut c,
            true,
        );
        assert_eq!(c[0], 10.0);
    }
}
