use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor2[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Tensor2::from_vec",
                format!("{rows}x{cols}"),
                format!("len {}", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a tensor from equal-length rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.set(i, i, 1.0);
        }
        t
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

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero-width rows
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn same_shape(&self, other: &Tensor2, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(op, self.shape_str(), other.shape_str()));
        }
        Ok(())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor2 {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &Tensor2) -> Result<Tensor2> {
        self.same_shape(other, "add")?;
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Tensor2) -> Result<Tensor2> {
        self.same_shape(other, "sub")?;
        Ok(Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor2) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · wᵀ` for `self: B×I`, `w: O×I`.
    pub fn matmul_nt(&self, w: &Tensor2) -> Result<Tensor2> {
        if self.cols != w.cols {
            return Err(Error::dim("matmul_nt", self.shape_str(), w.shape_str()));
        }
        let mut out = Tensor2::zeros(self.rows, w.rows);
        let blocked = w.rows / 4 * 4;
        for r in 0..self.rows {
            let x = self.row(r);
            let o = &mut out.data[r * w.rows..(r + 1) * w.rows];
            // four weight rows per pass reuse each load of x
            for c in (0..blocked).step_by(4) {
                let d = dot4(x, [w.row(c), w.row(c + 1), w.row(c + 2), w.row(c + 3)]);
                o[c..c + 4].copy_from_slice(&d);
            }
            for c in blocked..w.rows {
                o[c] = dot(x, w.row(c));
            }
        }
        Ok(out)
    }

    /// `self · w` for `self: B×O`, `w: O×I`.
    pub fn matmul(&self, w: &Tensor2) -> Result<Tensor2> {
        if self.cols != w.rows {
            return Err(Error::dim("matmul", self.shape_str(), w.shape_str()));
        }
        let mut out = Tensor2::zeros(self.rows, w.cols);
        for r in 0..self.rows {
            let orow = &mut out.data[r * w.cols..(r + 1) * w.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, w.row(k), orow);
                }
            }
        }
        Ok(out)
    }

    /// Accumulates `selfᵀ · x` into `acc`, for `self: B×O`, `x: B×I`, `acc: O×I`.
    pub fn accumulate_tn(&self, x: &Tensor2, acc: &mut Tensor2) -> Result<()> {
        if self.rows != x.rows || acc.rows != self.cols || acc.cols != x.cols {
            return Err(Error::dim(
                "accumulate_tn",
                format!("{}ᵀ·{}", self.shape_str(), x.shape_str()),
                acc.shape_str(),
            ));
        }
        for b in 0..self.rows {
            let xr = x.row(b);
            for (o, &g) in self.row(b).iter().enumerate() {
                if g != 0.0 {
                    axpy(g, xr, acc.row_mut(o));
                }
            }
        }
        Ok(())
    }

    /// Column sums as a `1×cols` tensor.
    pub fn column_sums(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(1, self.cols);
        for r in self.iter_rows() {
            axpy(1.0, r, &mut out.data);
        }
        out
    }

    /// Horizontal concatenation of tensors with equal row counts.
    pub fn hcat(parts: &[&Tensor2]) -> Result<Tensor2> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(Error::dim("hcat", format!("{rows} rows"), bad.shape_str()));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Tensor2 { rows, cols, data })
    }

    /// Copy of columns `[start, end)`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Tensor2 {
        assert!(start <= end && end <= self.cols);
        let w = end - start;
        let mut data = Vec::with_capacity(self.rows * w);
        for r in self.iter_rows() {
            data.extend_from_slice(&r[start..end]);
        }
        Tensor2 {
            rows: self.rows,
            cols: w,
            data,
        }
    }

    /// Copy of rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor2 {
        assert!(start <= end && end <= self.rows);
        Tensor2 {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn vstack(parts: &[&Tensor2]) -> Result<Tensor2> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if let Some(bad) = parts.iter().find(|p| p.cols != cols) {
            return Err(Error::dim("vstack", format!("{cols} cols"), bad.shape_str()));
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Tensor2 { rows, cols, data })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four partial sums let the compiler vectorise without reassociation flags
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// Dot products of `x` with four rows at once, each summed in the same
/// order as [`dot`] so results match it bit for bit.
#[inline]
fn dot4(x: &[f64], w: [&[f64]; 4]) -> [f64; 4] {
    let n = x.len();
    let chunks = n / 4;
    let w = w.map(|r| &r[..n]);
    let mut acc = [[0.0f64; 4]; 4];
    for i in 0..chunks {
        let j = 4 * i;
        let xs = &x[j..j + 4];
        for (a, row) in acc.iter_mut().zip(&w) {
            let ws = &row[j..j + 4];
            a[0] += xs[0] * ws[0];
            a[1] += xs[1] * ws[1];
            a[2] += xs[2] * ws[2];
            a[3] += xs[3] * ws[3];
        }
    }
    let mut out = [0.0; 4];
    for k in 0..4 {
        let a = acc[k];
        let mut s = (a[0] + a[1]) + (a[2] + a[3]);
        for j in 4 * chunks..n {
            s += x[j] * w[k][j];
        }
        out[k] = s;
    }
    out
}

/// `y += a·x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
