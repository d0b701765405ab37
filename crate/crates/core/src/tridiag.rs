//! Symmetric tridiagonal eigensolver: implicit QR with Wilkinson shifts.

use crate::error::{EvdError, Result};
use crate::matrix::{Matrix, TridiagonalMatrix};

/// Eigenvalues in ascending order and, optionally, matching eigenvectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenResult {
    pub lambda: Vec<f64>,
    pub q: Option<Matrix>,
    pub vectors_computed: bool,
}

/// Iteration budget per unit of order.
pub const MAX_ITER_PER_ROW: usize = 30;

#[inline]
fn negligible(e: f64, a: f64, b: f64) -> bool {
    e == 0.0 || e.abs() <= f64::EPSILON * (a.abs() + b.abs()) || e.abs() < f64::MIN_POSITIVE
}

/// Eigen-decomposition `T = Q diag(lambda) Q^T`.
///
/// Each eigenvector's largest-magnitude component is made positive (the
/// earlier index wins ties).
pub fn tridiag_eig(t: &TridiagonalMatrix, want_vectors: bool) -> Result<EigenResult> {
    let n = t.n();
    let mut d = t.d.clone();
    let mut e = t.e.clone();
    let mut q = want_vectors.then(|| Matrix::identity(n));
    let max_iter = MAX_ITER_PER_ROW * n;
    let mut iter = 0;
    let mut hi = n - 1;
    while hi > 0 {
        if negligible(e[hi - 1], d[hi - 1], d[hi]) {
            e[hi - 1] = 0.0;
            hi -= 1;
            continue;
        }
        let mut lo = hi - 1;
        while lo > 0 && !negligible(e[lo - 1], d[lo - 1], d[lo]) {
            lo -= 1;
        }
        if lo > 0 {
            e[lo - 1] = 0.0;
        }
        iter += 1;
        if iter > max_iter {
            return Err(EvdError::NoConvergence { iterations: max_iter, unconverged: hi + 1 });
        }
        qr_step(&mut d, &mut e, lo, hi, q.as_mut());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let lambda = order.iter().map(|&i| d[i]).collect();
    let q = q.map(|q| {
        let mut out = Matrix::from_fn(n, n, |r, k| q[(r, order[k])]);
        normalize_signs(&mut out);
        out
    });
    Ok(EigenResult { lambda, vectors_computed: q.is_some(), q })
}

/// Flips columns so that each one's largest-magnitude entry is positive.
pub fn normalize_signs(q: &mut Matrix) {
    for k in 0..q.cols() {
        let col = q.col_mut(k);
        let mut best = 0;
        for (r, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// One implicit shifted QR sweep on the unreduced block `lo..=hi`.
fn qr_step(d: &mut [f64], e: &mut [f64], lo: usize, hi: usize, mut q: Option<&mut Matrix>) {
    let half = 0.5 * (d[hi - 1] - d[hi]);
    let off = e[hi - 1];
    let root = half.hypot(off);
    let denom = if half >= 0.0 { half + root } else { half - root };
    let mu = d[hi] - off * off / denom;
    let mut x = d[lo] - mu;
    let mut z = e[lo];
    for k in lo..hi {
        let r = x.hypot(z);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (x / r, z / r) };
        if k > lo {
            e[k - 1] = r;
        }
        let (a, bb, cc) = (d[k], e[k], d[k + 1]);
        let cs2 = 2.0 * c * s * bb;
        d[k] = c * c * a + cs2 + s * s * cc;
        d[k + 1] = s * s * a - cs2 + c * c * cc;
        e[k] = c * s * (cc - a) + (c * c - s * s) * bb;
        if k + 1 < hi {
            x = e[k];
            z = s * e[k + 1];
            e[k + 1] *= c;
        }
        if let Some(q) = q.as_deref_mut() {
            let rows = q.rows();
            let (left, right) = q.as_mut_slice().split_at_mut((k + 1) * rows);
            let qk = &mut left[k * rows..];
            let qk1 = &mut right[..rows];
            for (u, v) in qk.iter_mut().zip(qk1.iter_mut()) {
                let (a, b) = (*u, *v);
                *u = c * a + s * b;
                *v = c * b - s * a;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(d: &[f64], e: &[f64]) -> TridiagonalMatrix {
        TridiagonalMatrix::new(d.to_vec(), e.to_vec()).unwrap()
    }

    #[test]
    fn toeplitz_spectrum() {
        let r = tridiag_eig(&t(&[2.0, 2.0, 2.0], &[1.0, 1.0]), true).unwrap();
        let s = 2f64.sqrt();
        for (got, want) in r.lambda.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
        let q = r.q.unwrap();
        let dense = t(&[2.0, 2.0, 2.0], &[1.0, 1.0]).to_dense();
        for k in 0..3 {
            for i in 0..3 {
                let tq: f64 = (0..3).map(|j| dense[(i, j)] * q[(j, k)]).sum();
                assert!((tq - r.lambda[k] * q[(i, k)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn diagonal_input_gives_permutation() {
        let r = tridiag_eig(&t(&[3.0, -1.0, 2.0], &[0.0, 0.0]), true).unwrap();
        assert_eq!(r.lambda, vec![-1.0, 2.0, 3.0]);
        let q = r.q.unwrap();
        assert_eq!(q, Matrix::from_rows(&[&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]));
    }

    #[test]
    fn values_only_skips_vectors() {
        let r = tridiag_eig(&t(&[1.0, 4.0], &[2.0]), false).unwrap();
        assert!(r.q.is_none() && !r.vectors_computed);
        let disc = (9.0f64 / 4.0 + 4.0).sqrt();
        assert!((r.lambda[0] - (2.5 - disc)).abs() < 1e-14);
    }

    #[test]
    fn single_entry() {
        let r = tridiag_eig(&t(&[-7.0], &[]), true).unwrap();
        assert_eq!(r.lambda, vec![-7.0]);
        assert_eq!(r.q.unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn sign_rule_prefers_earlier_index_on_ties() {
        let mut q = Matrix::from_rows(&[&[-0.5, 1.0], &[0.5, 0.0]]);
        normalize_signs(&mut q);
        assert_eq!(q[(0, 0)], 0.5);
        assert_eq!(q[(1, 0)], -0.5);
    }
}
