use super::dense::Matrix;
use crate::error::{shape_err, EvdError, Result};

/// Default symmetry tolerance, relative to `max(1, ||A||_F)`.
pub const DEFAULT_SYM_TOL: f64 = 1e-12;

/// Dense symmetric matrix in full column-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    data: Matrix,
    sym_tol: f64,
}

impl SymmetricMatrix {
    /// Validates symmetry with [`DEFAULT_SYM_TOL`].
    pub fn new(data: Matrix) -> Result<Self> {
        Self::with_tolerance(data, DEFAULT_SYM_TOL)
    }

    pub fn with_tolerance(data: Matrix, sym_tol: f64) -> Result<Self> {
        if !data.is_square() || data.rows() == 0 {
            return shape_err("SymmetricMatrix", format!("{}x{} is not a non-empty square", data.rows(), data.cols()));
        }
        if data.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(EvdError::InvalidArgument("matrix contains non-finite values".into()));
        }
        let n = data.rows();
        let limit = sym_tol * data.frobenius_norm().max(1.0);
        let mut deviation = 0.0f64;
        for j in 0..n {
            for i in j + 1..n {
                deviation = deviation.max((data[(i, j)] - data[(j, i)]).abs());
            }
        }
        if deviation > limit {
            return Err(EvdError::NotSymmetric { deviation, limit });
        }
        Ok(Self { data, sym_tol })
    }

    /// Averages `M` with its transpose, giving an exactly symmetric matrix.
    pub fn symmetrize(m: &Matrix) -> Result<Self> {
        if !m.is_square() || m.rows() == 0 {
            return shape_err("SymmetricMatrix::symmetrize", format!("{}x{}", m.rows(), m.cols()));
        }
        let n = m.rows();
        let data = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
        Self::new(data)
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn sym_tol(&self) -> f64 {
        self.sym_tol
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.frobenius_norm()
    }

    /// Columns `[c0, c1)` at full height.
    pub fn column_block(&self, owner: usize, c0: usize, c1: usize) -> Result<ColumnBlock> {
        ColumnBlock::from_matrix(owner, c0, c1, &self.data)
    }
}

/// A worker's contiguous column slab of the full matrix, stored at full height.
#[derive(Clone, Debug)]
pub struct ColumnBlock {
    pub owner: usize,
    pub col_start: usize,
    pub col_end: usize,
    pub data: Matrix,
}

impl ColumnBlock {
    pub fn from_matrix(owner: usize, col_start: usize, col_end: usize, a: &Matrix) -> Result<Self> {
        if col_start >= col_end || col_end > a.cols() {
            return shape_err("ColumnBlock", format!("range [{col_start}, {col_end}) of {} columns", a.cols()));
        }
        let data = a.sub(0, col_start, a.rows(), col_end - col_start).to_owned();
        Ok(Self { owner, col_start, col_end, data })
    }

    pub fn width(&self) -> usize {
        self.col_end - self.col_start
    }

    pub fn contains(&self, col: usize) -> bool {
        (self.col_start..self.col_end).contains(&col)
    }
}

/// Symmetric band matrix; stores the diagonal and `b` sub-diagonals.
///
/// Entry `(i, j)` with `0 <= i - j <= b` lives at `bands[(i - j) + j * (b + 1)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMatrix {
    n: usize,
    b: usize,
    bands: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, b: usize) -> Self {
        Self { n, b, bands: vec![0.0; (b + 1) * n] }
    }

    /// Extracts the band of a dense symmetric matrix, rejecting it if any
    /// lower entry outside the band exceeds `tol` in magnitude.
    pub fn from_dense(a: &Matrix, b: usize, tol: f64) -> Result<Self> {
        if !a.is_square() {
            return shape_err("BandMatrix::from_dense", format!("{}x{}", a.rows(), a.cols()));
        }
        let n = a.rows();
        let mut out = Self::zeros(n, b);
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in j..n {
                if i - j <= b {
                    out.bands[(i - j) + j * (b + 1)] = a[(i, j)];
                } else {
                    worst = worst.max(a[(i, j)].abs()).max(a[(j, i)].abs());
                }
            }
        }
        if worst > tol {
            return Err(EvdError::InvalidArgument(format!(
                "entry of magnitude {worst:e} outside bandwidth {b} (tolerance {tol:e})"
            )));
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn bands(&self) -> &[f64] {
        &self.bands
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.b {
            0.0
        } else {
            self.bands[(i - j) + j * (self.b + 1)]
        }
    }

    /// Sets `(i, j)` and, implicitly, `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.b, "({i}, {j}) outside bandwidth {}", self.b);
        self.bands[(i - j) + j * (self.b + 1)] = v;
    }

    pub fn to_dense(&self) -> Matrix {
        Matrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.to_dense().frobenius_norm()
    }
}

/// Symmetric tridiagonal matrix given by its diagonal and sub-diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalMatrix {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn new(d: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        if d.is_empty() || e.len() + 1 != d.len() {
            return shape_err("TridiagonalMatrix", format!("|d| = {}, |e| = {}", d.len(), e.len()));
        }
        Ok(Self { d, e })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.n();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.d[i];
        }
        for i in 0..n - 1 {
            m[(i + 1, i)] = self.e[i];
            m[(i, i + 1)] = self.e[i];
        }
        m
    }

    /// Max absolute row sum, an upper bound on the 2-norm.
    pub fn norm_inf(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = self.d[i].abs();
                if i > 0 {
                    s += self.e[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.e[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }
}
