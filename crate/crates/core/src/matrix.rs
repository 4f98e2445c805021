//! Dense row-major `f64` matrices.
//!
//! Rows are batch items, columns are features. Products go through
//! `matrixmultiply`, whose kernels sum each output element in a fixed order,
//! so results are reproducible bit-for-bit on a given machine.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "matrix",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    /// Stacks equally long rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "from_rows",
                    left: (1, cols),
                    right: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Gathers the given rows (in order) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut out);
        Ok(out)
    }
}

/// Products with at most this many rows skip the packed kernel.
const SHORT_ROWS: usize = 8;

/// `c = alpha · op(a) · op(b) + beta · c`, where `op` optionally transposes.
///
/// Shapes are checked by the caller; mismatches panic.
pub(crate) fn gemm(
    alpha: f64,
    a: &Matrix,
    trans_a: bool,
    b: &Matrix,
    trans_b: bool,
    beta: f64,
    c: &mut Matrix,
) {
    let (m, k) = if trans_a {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let (kb, n) = if trans_b {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    assert_eq!(k, kb, "gemm inner dimension");
    assert_eq!((m, n), c.shape(), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.data.iter_mut() {
            *v *= beta;
        }
        return;
    }
    if m <= SHORT_ROWS && !trans_a && !trans_b {
        short_gemm(alpha, a, b, beta, c);
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, a.cols as isize)
    } else {
        (a.cols as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, b.cols as isize)
    } else {
        (b.cols as isize, 1)
    };
    // SAFETY: the strides above describe exactly the row-major buffers of `a`
    // and `b` (or their transposes) and `c` has shape m x n, checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

/// A few rows against a wide matrix, where packing `b` would cost more than
/// the product. Each row of `b` is read once and applied to every output
/// row, which stay in cache.
fn short_gemm(alpha: f64, a: &Matrix, b: &Matrix, beta: f64, c: &mut Matrix) {
    let (k, n) = (a.cols, b.cols);
    if beta == 0.0 {
        c.data.fill(0.0);
    } else if beta != 1.0 {
        c.data.iter_mut().for_each(|v| *v *= beta);
    }
    for i in 0..k {
        let brow = &b.data[i * n..(i + 1) * n];
        for (out, arow) in c.data.chunks_exact_mut(n).zip(a.data.chunks_exact(k)) {
            let s = alpha * arow[i];
            for (o, bv) in out.iter_mut().zip(brow) {
                *o += s * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |r, c| {
            (0..a.cols()).map(|k| a.get(r, k) * b.get(k, c)).sum()
        })
    }

    #[test]
    fn matmul_matches_naive_product() {
        let a = Matrix::from_fn(5, 7, |r, c| (r as f64 - 2.0) * 0.3 + c as f64 * 0.11);
        let b = Matrix::from_fn(7, 3, |r, c| (r * 3 + c) as f64 * 0.07 - 0.5);
        let got = a.matmul(&b).unwrap();
        let want = naive(&a, &b);
        for (g, w) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_gemm_forms() {
        let a = Matrix::from_fn(4, 6, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0);
        let b = Matrix::from_fn(4, 3, |r, c| (r as f64) * 0.5 - c as f64);
        let mut out = Matrix::zeros(6, 3);
        gemm(1.0, &a, true, &b, false, 0.0, &mut out);
        assert_eq!(out, naive(&a.transpose(), &b));

        let c = Matrix::from_fn(2, 6, |r, c| (r + c) as f64);
        let mut out = Matrix::zeros(4, 2);
        gemm(1.0, &a, false, &c, true, 0.0, &mut out);
        assert_eq!(out, naive(&a, &c.transpose()));
    }

    #[test]
    fn short_products_agree_with_the_packed_kernel() {
        let b = Matrix::from_fn(37, 29, |r, c| ((r * 13 + c * 5) % 11) as f64 * 0.1 - 0.5);
        for m in [1, SHORT_ROWS, SHORT_ROWS + 1] {
            let a = Matrix::from_fn(m, 37, |r, c| ((r * 3 + c * 7) % 9) as f64 * 0.2 - 0.8);
            let c0 = Matrix::from_fn(m, 29, |r, c| (r + c) as f64 * 0.01);
            for (alpha, beta) in [(1.0, 0.0), (0.5, 1.0), (-2.0, 0.25)] {
                let mut short = c0.clone();
                gemm(alpha, &a, false, &b, false, beta, &mut short);
                // The transposed form of `b` always takes the packed path.
                let mut packed = c0.clone();
                gemm(alpha, &a, false, &b.transpose(), true, beta, &mut packed);
                for (x, y) in short.as_slice().iter().zip(packed.as_slice()) {
                    assert!((x - y).abs() < 1e-12, "m={m} alpha={alpha} beta={beta}");
                }
            }
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = Matrix::zeros(2, 3).matmul(&Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
    }

    #[test]
    fn empty_rows_are_fine() {
        let a = Matrix::zeros(0, 4);
        let b = Matrix::filled(4, 2, 1.0);
        assert_eq!(a.matmul(&b).unwrap().shape(), (0, 2));
    }
}
