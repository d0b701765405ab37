//! Dense multiply kernels over column-major views.
//!
//! Everything is written as axpy or dot loops over contiguous columns so the
//! compiler can vectorize them. Accumulation order is fixed, which keeps every
//! result bit-reproducible for a given input.

use super::counter::FlopCounter;
use super::dense::{MatMut, MatRef, Matrix};
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `C <- beta*C + alpha*op(A)*op(B)`; counts `m*n*k` multiply-adds.
pub fn gemm(
    beta: f64,
    c: &mut MatMut<'_>,
    alpha: f64,
    a: MatRef<'_>,
    opa: Op,
    b: MatRef<'_>,
    opb: Op,
    counter: &mut FlopCounter,
) -> Result<()> {
    let (m, ka) = match opa {
        Op::N => (a.rows(), a.cols()),
        Op::T => (a.cols(), a.rows()),
    };
    let (kb, n) = match opb {
        Op::N => (b.rows(), b.cols()),
        Op::T => (b.cols(), b.rows()),
    };
    if ka != kb || c.rows() != m || c.cols() != n {
        return shape_err(
            "gemm",
            format!("op(A) {m}x{ka}, op(B) {kb}x{n}, C {}x{}", c.rows(), c.cols()),
        );
    }
    let k = ka;
    for j in 0..n {
        let cj = c.col_mut(j);
        if beta == 0.0 {
            cj.fill(0.0);
        } else if beta != 1.0 {
            cj.iter_mut().for_each(|x| *x *= beta);
        }
    }
    counter.add((m * n * k) as u64);
    if k == 0 || m == 0 || n == 0 || alpha == 0.0 {
        return Ok(());
    }
    match (opa, opb) {
        (Op::N, Op::N) => {
            for j in 0..n {
                let bj = b.col(j);
                let cj = c.col_mut(j);
                for (p, &bpj) in bj.iter().enumerate() {
                    if bpj != 0.0 {
                        axpy(cj, alpha * bpj, a.col(p));
                    }
                }
            }
        }
        (Op::N, Op::T) => {
            for j in 0..n {
                let cj = c.col_mut(j);
                for p in 0..k {
                    let bjp = b.get(j, p);
                    if bjp != 0.0 {
                        axpy(cj, alpha * bjp, a.col(p));
                    }
                }
            }
        }
        (Op::T, Op::N) => {
            for j in 0..n {
                let bj = b.col(j);
                let cj = c.col_mut(j);
                for (i, ci) in cj.iter_mut().enumerate() {
                    *ci += alpha * dot(a.col(i), bj);
                }
            }
        }
        (Op::T, Op::T) => {
            for j in 0..n {
                for i in 0..m {
                    let mut s = 0.0;
                    for p in 0..k {
                        s += a.get(p, i) * b.get(j, p);
                    }
                    let v = c.get(i, j) + alpha * s;
                    c.set(i, j, v);
                }
            }
        }
    }
    Ok(())
}

/// Allocating `op(A)*op(B)`.
pub fn matmul_op(a: MatRef<'_>, opa: Op, b: MatRef<'_>, opb: Op, counter: &mut FlopCounter) -> Result<Matrix> {
    let m = if opa == Op::N { a.rows() } else { a.cols() };
    let n = if opb == Op::N { b.cols() } else { b.rows() };
    let mut c = Matrix::zeros(m, n);
    gemm(0.0, &mut c.view_mut(), 1.0, a, opa, b, opb, counter)?;
    Ok(c)
}

/// Exact product `A*B`, counting `m*n*k` multiply-adds.
pub fn matmul_counted(a: &Matrix, b: &Matrix, counter: &mut FlopCounter) -> Result<Matrix> {
    matmul_op(a.view(), Op::N, b.view(), Op::N, counter)
}

/// `C[i,j] -= sum_p (Yr[i,p]*Zc[j,p] + Zr[i,p]*Yc[j,p])` over a general block.
///
/// The per-entry term is symmetric under swapping the row and column operands,
/// so two copies of a mirrored entry computed on different workers agree bit
/// for bit. Counts `2*m*n*k` multiply-adds.
pub fn rank2k_update_block(
    c: &mut MatMut<'_>,
    y_rows: MatRef<'_>,
    z_rows: MatRef<'_>,
    y_cols: MatRef<'_>,
    z_cols: MatRef<'_>,
    counter: &mut FlopCounter,
) -> Result<()> {
    let (m, n) = (c.rows(), c.cols());
    let k = y_rows.cols();
    if y_rows.rows() != m
        || z_rows.rows() != m
        || y_cols.rows() != n
        || z_cols.rows() != n
        || z_rows.cols() != k
        || y_cols.cols() != k
        || z_cols.cols() != k
    {
        return shape_err("rank2k_update_block", format!("C {m}x{n} with panels of width {k}"));
    }
    for j in 0..n {
        let cj = c.col_mut(j);
        for p in 0..k {
            let zj = z_cols.get(j, p);
            let yj = y_cols.get(j, p);
            let yp = y_rows.col(p);
            let zp = z_rows.col(p);
            for i in 0..m {
                cj[i] -= yp[i] * zj + zp[i] * yj;
            }
        }
    }
    counter.add((2 * m * n * k) as u64);
    Ok(())
}

/// In-place `A2 <- A2 - Y*Z^T - Z*Y^T` on a square block.
///
/// Only the lower triangle is computed; the upper triangle is mirrored from it,
/// so the result is exactly symmetric. Counts `m*(m+1)*k` multiply-adds.
pub fn sym_rank2k_update(a2: &mut MatMut<'_>, y: MatRef<'_>, z: MatRef<'_>, counter: &mut FlopCounter) -> Result<()> {
    let m = a2.rows();
    let k = y.cols();
    if a2.cols() != m || y.rows() != m || z.rows() != m || z.cols() != k {
        return shape_err(
            "sym_rank2k_update",
            format!("A2 {}x{}, Y {}x{}, Z {}x{}", m, a2.cols(), y.rows(), k, z.rows(), z.cols()),
        );
    }
    for j in 0..m {
        let cj = &mut a2.col_mut(j)[j..];
        for p in 0..k {
            let zj = z.get(j, p);
            let yj = y.get(j, p);
            let yp = &y.col(p)[j..];
            let zp = &z.col(p)[j..];
            for i in 0..cj.len() {
                cj[i] -= yp[i] * zj + zp[i] * yj;
            }
        }
    }
    for j in 0..m {
        for i in j + 1..m {
            let v = a2.get(i, j);
            a2.set(j, i, v);
        }
    }
    counter.add((m * (m + 1) * k) as u64);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_product() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Matrix::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]);
        let mut fc = FlopCounter::new();
        let c = matmul_counted(&a, &b, &mut fc).unwrap();
        assert_eq!(c, Matrix::from_rows(&[&[19.0, 22.0], &[43.0, 50.0]]));
        assert_eq!(fc.total(), 8);
    }

    #[test]
    fn identity_product_counts_cube() {
        let n = 5;
        let b = Matrix::from_fn(n, n, |i, j| (i * 7 + j) as f64 - 3.0);
        let mut fc = FlopCounter::new();
        let c = matmul_counted(&Matrix::identity(n), &b, &mut fc).unwrap();
        assert_eq!(c, b);
        assert_eq!(fc.total(), 125);
        let _ = matmul_counted(&b, &Matrix::identity(n), &mut fc).unwrap();
        assert_eq!(fc.total(), 250);
    }

    #[test]
    fn transposed_variants_match_explicit_transpose() {
        let a = Matrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) * 0.5 - j as f64);
        let b = Matrix::from_fn(4, 2, |i, j| (i * j) as f64 + 0.25);
        let mut fc = FlopCounter::new();
        let tn = matmul_op(a.view(), Op::T, b.view(), Op::N, &mut fc).unwrap();
        let expect = matmul_counted(&a.transpose(), &b, &mut fc).unwrap();
        assert!(tn.max_abs_diff(&expect) < 1e-14);
        let bt = b.transpose();
        let nt = matmul_op(a.transpose().view(), Op::N, bt.view(), Op::T, &mut fc).unwrap();
        assert!(nt.max_abs_diff(&expect) < 1e-14);
        let tt = matmul_op(a.view(), Op::T, bt.view(), Op::T, &mut fc).unwrap();
        assert!(tt.max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut fc = FlopCounter::new();
        assert!(matmul_counted(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3), &mut fc).is_err());
        let mut a2 = Matrix::zeros(3, 3);
        let y = Matrix::zeros(4, 1);
        assert!(sym_rank2k_update(&mut a2.view_mut(), y.view(), y.view(), &mut fc).is_err());
    }

    #[test]
    fn sym_update_unit_vectors() {
        let mut a2 = Matrix::zeros(3, 3);
        let mut y = Matrix::zeros(3, 1);
        let mut z = Matrix::zeros(3, 1);
        y[(0, 0)] = 1.0;
        z[(1, 0)] = 1.0;
        let mut fc = FlopCounter::new();
        sym_rank2k_update(&mut a2.view_mut(), y.view(), z.view(), &mut fc).unwrap();
        let mut expect = Matrix::zeros(3, 3);
        expect[(0, 1)] = -1.0;
        expect[(1, 0)] = -1.0;
        assert_eq!(a2, expect);
    }

    #[test]
    fn sym_update_zero_y_is_noop() {
        let a = Matrix::from_fn(4, 4, |i, j| (i + j) as f64);
        let mut a2 = a.clone();
        let y = Matrix::zeros(4, 2);
        let z = Matrix::from_fn(4, 2, |i, j| (i * j) as f64 + 1.0);
        let mut fc = FlopCounter::new();
        sym_rank2k_update(&mut a2.view_mut(), y.view(), z.view(), &mut fc).unwrap();
        assert_eq!(a2, a);
    }
}
