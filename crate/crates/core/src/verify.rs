//! Accuracy metrics and an independent cyclic Jacobi eigen-oracle.
//!
//! The oracle shares no code with the reduction stages; it only rotates a
//! dense copy of the input, so it can be used to check them.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, EvdError, Result};
use crate::matrix::{gemm, FlopCounter, Matrix, Op, SymmetricMatrix, EPS};

/// Default multiplier on `2 * eps` for the orthogonality bounds.
pub const DEFAULT_SLACK: f64 = 16.0;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of `A`, ascending, via cyclic Jacobi rotations.
pub fn jacobi_eig_oracle(a: &SymmetricMatrix) -> Result<Vec<f64>> {
    Ok(jacobi_core(a.matrix(), false)?.0)
}

/// Eigenvalues (ascending) and the matching orthonormal eigenvectors.
pub fn jacobi_eigh(a: &SymmetricMatrix) -> Result<(Vec<f64>, Matrix)> {
    let (w, v) = jacobi_core(a.matrix(), true)?;
    Ok((w, v.expect("vectors requested")))
}

fn off_diagonal_mass(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn jacobi_core(input: &Matrix, want_vectors: bool) -> Result<(Vec<f64>, Option<Matrix>)> {
    let n = input.rows();
    let mut a = input.clone();
    let mut v = want_vectors.then(|| Matrix::identity(n));
    let target = 1e-15 * input.frobenius_norm();
    let mut sweeps = 0;
    loop {
        let off = off_diagonal_mass(&a);
        if off <= target || off == 0.0 {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(EvdError::OracleNoConvergence { sweeps, off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                // Entries negligible next to both diagonals are dropped outright.
                if sweeps > 4 && apq.abs() * 1e18 < app.abs().min(aqq.abs()) {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                if let Some(v) = v.as_mut() {
                    for r in 0..n {
                        let vrp = v[(r, p)];
                        let vrq = v[(r, q)];
                        v[(r, p)] = c * vrp - s * vrq;
                        v[(r, q)] = s * vrp + c * vrq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let w: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let v = v.map(|v| Matrix::from_fn(n, n, |r, k| v[(r, order[k])]));
    Ok((w, v))
}

/// `||A - Q diag(lambda) Q^T||_F / (n ||A||_F)`.
pub fn backward_error(a: &Matrix, q: &Matrix, lambda: &[f64]) -> Result<f64> {
    let n = a.rows();
    if !a.is_square() || q.rows() != n || q.cols() != lambda.len() {
        return shape_err(
            "backward_error",
            format!("A {}x{}, Q {}x{}, {} eigenvalues", a.rows(), a.cols(), q.rows(), q.cols(), lambda.len()),
        );
    }
    let ql = Matrix::from_fn(n, lambda.len(), |i, j| q[(i, j)] * lambda[j]);
    let mut r = a.clone();
    let mut fc = FlopCounter::new();
    gemm(1.0, &mut r.view_mut(), -1.0, ql.view(), Op::N, q.view(), Op::T, &mut fc)?;
    let na = a.frobenius_norm();
    if na == 0.0 {
        return Ok(r.frobenius_norm() / n as f64);
    }
    Ok(r.frobenius_norm() / (n as f64 * na))
}

/// `||I - Q Q^T||_F / n`.
pub fn orthogonality(q: &Matrix) -> Result<f64> {
    if !q.is_square() {
        return shape_err("orthogonality", format!("{}x{}", q.rows(), q.cols()));
    }
    let n = q.rows();
    let mut r = Matrix::identity(n);
    let mut fc = FlopCounter::new();
    gemm(1.0, &mut r.view_mut(), -1.0, q.view(), Op::N, q.view(), Op::T, &mut fc)?;
    Ok(r.frobenius_norm() / n as f64)
}

/// Orthogonality metric of the product `Q1 Q2`.
pub fn gemm_bound_metric(q1: &Matrix, q2: &Matrix) -> Result<f64> {
    let mut fc = FlopCounter::new();
    let p = crate::matrix::matmul_counted(q1, q2, &mut fc)?;
    orthogonality(&p)
}

/// True iff `Q1 Q2` stays within `2 * eps * slack` of orthogonal, measured
/// through the Frobenius upper bound on the 2-norm.
pub fn check_gemm_bounds(q1: &Matrix, q2: &Matrix, slack: f64) -> bool {
    matches!(gemm_bound_metric(q1, q2), Ok(m) if m <= 2.0 * EPS * slack)
}

/// Largest absolute difference between two ascending eigenvalue lists.
pub fn max_eigenvalue_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "eigenvalue counts differ");
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub backward: f64,
    pub ortho: f64,
    pub eps: f64,
    pub slack: f64,
    pub bound_ok: bool,
}

impl AccuracyReport {
    pub fn compute(a: &Matrix, q: &Matrix, lambda: &[f64], slack: f64) -> Result<Self> {
        let backward = backward_error(a, q, lambda)?;
        let ortho = orthogonality(q)?;
        Ok(Self { backward, ortho, eps: EPS, slack, bound_ok: ortho <= 2.0 * EPS * slack })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(rows: &[&[f64]]) -> SymmetricMatrix {
        SymmetricMatrix::new(Matrix::from_rows(rows)).unwrap()
    }

    #[test]
    fn diagonal_input_returns_sorted_diagonal() {
        let a = SymmetricMatrix::new(Matrix::from_diag(&[3.0, -1.0, 2.0])).unwrap();
        assert_eq!(jacobi_eig_oracle(&a).unwrap(), vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn swap_matrix() {
        let w = jacobi_eig_oracle(&sym(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((w[0] + 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn toeplitz_tridiagonal_spectrum() {
        let a = sym(&[&[2.0, 1.0, 0.0], &[1.0, 2.0, 1.0], &[0.0, 1.0, 2.0]]);
        let (w, v) = jacobi_eigh(&a).unwrap();
        let s = 2f64.sqrt();
        for (got, want) in w.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!(orthogonality(&v).unwrap() < 1e-15);
        assert!(backward_error(a.matrix(), &v, &w).unwrap() < 1e-15);
    }

    #[test]
    fn orthogonality_hand_cases() {
        assert_eq!(orthogonality(&Matrix::identity(4)).unwrap(), 0.0);
        let q = Matrix::from_diag(&[2.0, 2.0]);
        let expect = 3.0 * 2f64.sqrt() / 2.0;
        assert!((orthogonality(&q).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn backward_error_of_identity_basis_is_off_diagonal_mass() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        let e = backward_error(&a, &Matrix::identity(2), &[1.0, 4.0]).unwrap();
        let expect = (8.0f64).sqrt() / (2.0 * a.frobenius_norm());
        assert!((e - expect).abs() < 1e-16);
    }

    #[test]
    fn gemm_bounds_detect_scaled_column() {
        let i = Matrix::identity(5);
        assert!(check_gemm_bounds(&i, &i, DEFAULT_SLACK));
        let mut bad = Matrix::identity(5);
        bad[(2, 2)] = 1.001;
        assert!(!check_gemm_bounds(&bad, &i, DEFAULT_SLACK));
    }
}
