//! Solves the tridiagonal eigenproblem for the second-difference matrix,
//! whose eigenvalues are known in closed form.
//!
//! Usage: cargo run --release --example tridiagonal_solver [n]

use pipevd::matrix::TridiagonalMatrix;
use pipevd::tridiag::tridiag_eig;
use pipevd::verify::{backward_error, max_eigenvalue_gap, orthogonality};

fn main() -> pipevd::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let t = TridiagonalMatrix::new(vec![2.0; n], vec![-1.0; n - 1])?;
    let start = std::time::Instant::now();
    let res = tridiag_eig(&t, true)?;
    let secs = start.elapsed().as_secs_f64();
    let h = std::f64::consts::PI / (n + 1) as f64;
    let mut exact: Vec<f64> = (1..=n).map(|k| 2.0 - 2.0 * (k as f64 * h).cos()).collect();
    exact.sort_by(f64::total_cmp);
    let q = res.q.as_ref().expect("vectors requested");
    println!("n = {n}, solved in {secs:.3}s");
    println!("max eigenvalue error = {:.2e}", max_eigenvalue_gap(&res.lambda, &exact));
    println!("backward error = {:.2e}", backward_error(&t.to_dense(), q, &res.lambda)?);
    println!("orthogonality = {:.2e}", orthogonality(q)?);
    Ok(())
}
