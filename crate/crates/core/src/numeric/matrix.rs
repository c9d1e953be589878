use crate::error::{Error, Result};

/// Dense row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite matrix entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw storage. Callers must keep entries finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
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

    /// `y = self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Shape(format!(
                "matvec: matrix has {} columns, vector has {}",
                self.cols,
                x.len()
            )));
        }
        Ok(self.data.chunks_exact(self.cols.max(1)).take(self.rows).map(|row| dot(row, x)).collect())
    }

    /// `y += self[:, col_offset..col_offset + x.len()] * x`.
    pub(crate) fn matvec_block_acc(&self, col_offset: usize, x: &[f64], y: &mut [f64]) {
        debug_assert!(col_offset + x.len() <= self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let start = r * self.cols + col_offset;
            *out += dot(&self.data[start..start + x.len()], x);
        }
    }

    /// `y += self[:, col_offset..col_offset + y.len()]^T * g`.
    pub(crate) fn matvec_t_block_acc(&self, col_offset: usize, g: &[f64], y: &mut [f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert!(col_offset + y.len() <= self.cols);
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            let start = r * self.cols + col_offset;
            axpy(gr, &self.data[start..start + y.len()], y);
        }
    }

    /// `self[:, col_offset..col_offset + x.len()] += g ⊗ x`.
    pub(crate) fn add_outer_block(&mut self, col_offset: usize, g: &[f64], x: &[f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert!(col_offset + x.len() <= self.cols);
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            let start = r * self.cols + col_offset;
            axpy(gr, x, &mut self.data[start..start + x.len()]);
        }
    }

    /// 3x3 determinant; panics on other shapes.
    pub fn det3(&self) -> f64 {
        assert!(self.rows == 3 && self.cols == 3, "det3 on {}x{}", self.rows, self.cols);
        let m = |r, c| self.get(r, c);
        m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
            + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
    }

    /// Inverse of a 3x3 matrix via the adjugate.
    pub fn inverse3(&self) -> Result<Matrix> {
        if self.rows != 3 || self.cols != 3 {
            return Err(Error::Shape(format!("inverse3 on {}x{}", self.rows, self.cols)));
        }
        let det = self.det3();
        if det.abs() <= 1e-12 {
            return Err(Error::Argument(format!("singular 3x3 matrix (det = {det:e})")));
        }
        let m = |r, c| self.get(r, c);
        let cof = [
            m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1),
            m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2),
            m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1),
            m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2),
            m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0),
            m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2),
            m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0),
            m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1),
            m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0),
        ];
        Matrix::from_vec(3, 3, cof.iter().map(|c| c / det).collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
