//! Row-major dense matrices and the handful of kernels the model needs.

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn view(&self) -> MatRef<'_> {
        MatRef {
            rows: self.rows,
            cols: self.cols,
            data: &self.data,
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_row_vector(&mut self, v: &[f64]) {
        for row in self.data.chunks_exact_mut(self.cols) {
            for (a, b) in row.iter_mut().zip(v) {
                *a += b;
            }
        }
    }

    /// Copies rows `[r0, r0 + nr)` × columns `[c0, c0 + nc)`.
    pub fn block(&self, r0: usize, nr: usize, c0: usize, nc: usize) -> Mat {
        let mut out = Mat::zeros(nr, nc);
        for r in 0..nr {
            out.row_mut(r).copy_from_slice(&self.row(r0 + r)[c0..c0 + nc]);
        }
        out
    }

    /// Writes `src` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, src: &Mat) {
        for r in 0..src.rows {
            self.row_mut(r0 + r)[c0..c0 + src.cols].copy_from_slice(src.row(r));
        }
    }
}

impl<'a> MatRef<'a> {
    pub fn new(rows: usize, cols: usize, data: &'a [f64]) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &'a [f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `c = op(a) · op(b) + beta · c`, where `op` optionally transposes.
fn gemm(a: MatRef<'_>, ta: bool, b: MatRef<'_>, tb: bool, beta: f64, c: &mut [f64]) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, kb, "inner dimensions differ");
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: strides and extents above describe exactly the buffers passed in,
    // whose lengths are checked against the shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// a · b
pub fn matmul(a: MatRef<'_>, b: MatRef<'_>) -> Mat {
    let mut out = Mat::zeros(a.rows, b.cols);
    gemm(a, false, b, false, 0.0, &mut out.data);
    out
}

/// a · bᵀ
pub fn matmul_nt(a: MatRef<'_>, b: MatRef<'_>) -> Mat {
    let mut out = Mat::zeros(a.rows, b.rows);
    gemm(a, false, b, true, 0.0, &mut out.data);
    out
}

/// acc += aᵀ · b
pub fn matmul_tn_acc(a: MatRef<'_>, b: MatRef<'_>, acc: &mut [f64]) {
    gemm(a, true, b, false, 1.0, acc);
}

/// acc += a · b
pub fn matmul_acc(a: MatRef<'_>, b: MatRef<'_>, acc: &mut [f64]) {
    gemm(a, false, b, false, 1.0, acc);
}

/// Adds the column sums of `m` into `acc`.
pub fn col_sums_acc(m: &Mat, acc: &mut [f64]) {
    for row in m.data.chunks_exact(m.cols) {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
    }
}

/// Numerically stable in-place softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        row.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// log-softmax of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}
