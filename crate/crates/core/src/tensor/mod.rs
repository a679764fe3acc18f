//! Dense row-major matrices, seeded random streams and the numeric kernels the
//! GCN stack is built from. Every kernel that participates in training has an
//! explicit backward counterpart.

mod matrix;
mod ops;
mod rng;
mod sparse;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

pub use matrix::Matrix;
pub use ops::{
    dropout, glorot_init, relu, relu_backward, softmax, softmax_cross_entropy, DropoutMask,
};
pub use rng::DetRng;
pub use sparse::{spmm_norm, spmm_norm_transpose};

/// Scalar type a run computes in.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    const PRECISION: Precision;

    fn of(x: f64) -> Self;

    fn to_f64_lossless(self) -> f64;

    /// `c = a·b` for an `m×k` by `k×n` product, each operand addressed through
    /// its row and column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(dims: (usize, usize, usize), a: &[Self], sa: (isize, isize), b: &[Self], sb: (isize, isize), c: &mut [Self]);
}

/// Largest offset a strided `rows×cols` view touches.
fn last_offset(rows: usize, cols: usize, (rs, cs): (isize, isize)) -> usize {
    (rows - 1) * rs as usize + (cols - 1) * cs as usize
}

macro_rules! checked_gemm {
    ($kernel:path, $dims:expr, $a:expr, $sa:expr, $b:expr, $sb:expr, $c:expr) => {{
        let (m, k, n) = $dims;
        if m == 0 || n == 0 {
            return;
        }
        assert!($c.len() >= m * n, "gemm output too short");
        if k == 0 {
            $c[..m * n].iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        assert!($a.len() > last_offset(m, k, $sa) && $b.len() > last_offset(k, n, $sb), "gemm operand too short");
        // SAFETY: every offset the kernel reads or writes was bounds-checked above
        unsafe {
            $kernel(
                m, k, n, 1.0,
                $a.as_ptr(), $sa.0, $sa.1,
                $b.as_ptr(), $sb.0, $sb.1,
                0.0,
                $c.as_mut_ptr(), n as isize, 1,
            )
        }
    }};
}

impl Real for f32 {
    const PRECISION: Precision = Precision::F32;

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self as f64
    }

    fn gemm(dims: (usize, usize, usize), a: &[Self], sa: (isize, isize), b: &[Self], sb: (isize, isize), c: &mut [Self]) {
        checked_gemm!(matrixmultiply::sgemm, dims, a, sa, b, sb, c)
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::F64;

    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self
    }

    fn gemm(dims: (usize, usize, usize), a: &[Self], sa: (isize, isize), b: &[Self], sb: (isize, isize), c: &mut [Self]) {
        checked_gemm!(matrixmultiply::dgemm, dims, a, sa, b, sb, c)
    }
}

/// Run-wide floating point precision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
        }
    }
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
