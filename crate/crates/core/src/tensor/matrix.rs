use super::Real;
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from f64 values, converting to the run precision.
    pub fn from_f64(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, values.iter().map(|&v| T::of(v)).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossless())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.same_shape("max_abs_diff", other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    fn same_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        T::gemm((n, k, m), &self.data, (k as isize, 1), &other.data, (m as isize, 1), &mut out);
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `selfᵀ · other`, without materializing the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::shape("matmul_tn", self.shape(), other.shape()));
        }
        let (a, k, b) = (self.cols, self.rows, other.cols);
        let mut out = vec![T::zero(); a * b];
        T::gemm((a, k, b), &self.data, (1, a as isize), &other.data, (b as isize, 1), &mut out);
        Ok(Self {
            rows: a,
            cols: b,
            data: out,
        })
    }

    /// `self · otherᵀ`, without materializing the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::shape("matmul_nt", self.shape(), other.shape()));
        }
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let mut out = vec![T::zero(); n * m];
        T::gemm((n, k, m), &self.data, (k as isize, 1), &other.data, (1, k as isize), &mut out);
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape("add", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.same_shape("hadamard", other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a * b)
                .collect(),
        })
    }

    /// Adds a `1 × cols` row to every row.
    pub fn add_row_broadcast(&mut self, row: &Self) -> Result<()> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::shape("add_row_broadcast", self.shape(), row.shape()));
        }
        for r in 0..self.rows {
            for (a, &b) in self.row_mut(r).iter_mut().zip(&row.data) {
                *a += b;
            }
        }
        Ok(())
    }

    /// Column sums as a `1 × cols` matrix, accumulated in row order.
    pub fn column_sums(&self) -> Self {
        let mut out = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        Self {
            rows: 1,
            cols: self.cols,
            data: out,
        }
    }

    /// Column block `[start, end)`.
    pub fn columns(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.cols {
            return Err(Error::InvalidArgument(format!(
                "column range {start}..{end} out of bounds for {} columns",
                self.cols
            )));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(self.rows * w);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Ok(Self {
            rows: self.rows,
            cols: w,
            data,
        })
    }

    /// Column-wise concatenation in the given order.
    pub fn hcat(blocks: &[Self]) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::Empty("hcat of zero blocks".into()));
        };
        let rows = first.rows;
        if let Some(bad) = blocks.iter().find(|b| b.rows != rows) {
            return Err(Error::shape("hcat", first.shape(), bad.shape()));
        }
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for b in blocks {
                data.extend_from_slice(b.row(r));
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Splits into consecutive column blocks of the given widths.
    pub fn split_columns(&self, widths: &[usize]) -> Result<Vec<Self>> {
        let total: usize = widths.iter().sum();
        if total != self.cols {
            return Err(Error::shape("split_columns", self.shape(), (self.rows, total)));
        }
        let mut start = 0;
        widths
            .iter()
            .map(|&w| {
                let block = self.columns(start, start + w);
                start += w;
                block
            })
            .collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::InvalidArgument(format!(
                    "row index {i} out of bounds for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    /// Inverse of [`select_rows`](Self::select_rows): writes `self`'s rows into
    /// a zero matrix with `rows` rows at the given positions.
    pub fn scatter_rows(&self, rows: usize, indices: &[usize]) -> Result<Self> {
        if indices.len() != self.rows {
            return Err(Error::shape("scatter_rows", self.shape(), (indices.len(), self.cols)));
        }
        let mut out = Self::zeros(rows, self.cols);
        for (src, &dst) in indices.iter().enumerate() {
            if dst >= rows {
                return Err(Error::InvalidArgument(format!(
                    "row index {dst} out of bounds for {rows} rows"
                )));
            }
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix<f64> {
        Matrix::from_f64(rows, cols, v).unwrap()
    }

    #[test]
    fn matmul_hand_computed() {
        let a = m(2, 2, &[1., 2., 3., 4.]);
        let b = m(2, 2, &[5., 6., 7., 8.]);
        assert_eq!(a.matmul(&b).unwrap(), m(2, 2, &[19., 22., 43., 50.]));
    }

    fn naive(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
    }

    #[test]
    fn products_match_triple_loop() {
        let mut rng = crate::tensor::DetRng::new(1, 0);
        for (n, k, p) in [(1, 1, 1), (7, 13, 5), (33, 9, 70), (64, 64, 3), (5, 0, 4)] {
            let a = Matrix::from_fn(n, k, |_, _| rng.normal());
            let b = Matrix::from_fn(k, p, |_, _| rng.normal());
            let expect = naive(&a, &b);
            let tol = 1e-12 * (k.max(1) as f64);
            assert!(a.matmul(&b).unwrap().max_abs_diff(&expect).unwrap() <= tol);
            assert!(a.transpose().matmul_tn(&b).unwrap().max_abs_diff(&expect).unwrap() <= tol);
            assert!(a.matmul_nt(&b.transpose()).unwrap().max_abs_diff(&expect).unwrap() <= tol);
            let single = a.cast::<f32>().matmul(&b.cast::<f32>()).unwrap().cast::<f64>();
            assert!(single.max_abs_diff(&expect).unwrap() <= 1e-4 * (k.max(1) as f64));
        }
    }

    #[test]
    fn matmul_identity_and_zero() {
        let a = m(2, 3, &[1.5, -2., 0.25, 4., 5., -6.]);
        assert_eq!(a.matmul(&Matrix::identity(3)).unwrap(), a);
        let z = Matrix::<f64>::zeros(4, 2);
        assert_eq!(z.matmul(&a).unwrap(), Matrix::zeros(4, 3));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Shape { .. })));
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = m(3, 2, &[1., 2., 3., 4., 5., 6.]);
        let b = m(3, 4, &(0..12).map(|x| x as f64 * 0.5 - 2.).collect::<Vec<_>>());
        assert_eq!(a.matmul_tn(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        let c = m(4, 2, &(0..8).map(|x| x as f64 - 3.).collect::<Vec<_>>());
        assert_eq!(a.matmul_nt(&c).unwrap(), a.matmul(&c.transpose()).unwrap());
    }

    #[test]
    fn hcat_split_roundtrip() {
        let a = m(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let parts = a.split_columns(&[1, 2]).unwrap();
        assert_eq!(parts[0], m(2, 1, &[1., 4.]));
        assert_eq!(Matrix::hcat(&parts).unwrap(), a);
        assert!(a.split_columns(&[1, 1]).is_err());
    }

    #[test]
    fn select_scatter_rows() {
        let a = m(3, 2, &[1., 2., 3., 4., 5., 6.]);
        let s = a.select_rows(&[2, 0]).unwrap();
        assert_eq!(s, m(2, 2, &[5., 6., 1., 2.]));
        let back = s.scatter_rows(3, &[2, 0]).unwrap();
        assert_eq!(back, m(3, 2, &[1., 2., 0., 0., 5., 6.]));
    }

    #[test]
    fn column_sums_and_broadcast() {
        let mut a = m(2, 2, &[1., 2., 3., 4.]);
        assert_eq!(a.column_sums(), m(1, 2, &[4., 6.]));
        a.add_row_broadcast(&m(1, 2, &[10., 20.])).unwrap();
        assert_eq!(a, m(2, 2, &[11., 22., 13., 24.]));
    }
}
