//! Householder reflectors and their compact WY aggregation.
//!
//! A reflector is `H = I - tau * v * v^T` with `v[0] = 1`. A product of `k`
//! reflectors `H_0 H_1 ... H_{k-1}` is stored as `I - W * Y^T` where `Y`
//! holds the vectors (unit lower trapezoidal) and `W = Y * T`.

use super::counter::FlopCounter;
use super::dense::{MatMut, MatRef, Matrix};
use super::kernels::{axpy, dot, gemm, Op};
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Euclidean norm with scaling against overflow.
pub(crate) fn norm2(x: &[f64]) -> f64 {
    super::dense::frobenius(x)
}

/// Reflector that maps `x` onto `alpha * e_1`.
///
/// Returns `(v, tau, alpha)` with `v[0] = 1`. When the tail of `x` is already
/// zero the reflector is the identity (`tau = 0`, `alpha = x[0]`).
///
/// ```
/// use pipevd::matrix::house_vector;
/// let (v, tau, alpha) = house_vector(&[3.0, 4.0]);
/// assert_eq!(alpha, -5.0);
/// assert_eq!(v, vec![1.0, 0.5]);
/// assert!((tau - 1.6).abs() < 1e-15);
/// ```
pub fn house_vector(x: &[f64]) -> (Vec<f64>, f64, f64) {
    let mut v = x.to_vec();
    if v.is_empty() {
        return (v, 0.0, 0.0);
    }
    let (tau, alpha) = make_reflector(&mut v);
    v[0] = 1.0;
    (v, tau, alpha)
}

/// In-place variant of [`house_vector`]: on return `x[0] = alpha` and
/// `x[1..]` holds the tail of `v`.
pub fn make_reflector(x: &mut [f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let x0 = x[0];
    let tail = norm2(&x[1..]);
    if tail == 0.0 {
        return (0.0, x0);
    }
    let nrm = hypot_scaled(x0, tail);
    let beta = if x0 >= 0.0 { -nrm } else { nrm };
    let tau = (beta - x0) / beta;
    let scale = 1.0 / (x0 - beta);
    for xi in &mut x[1..] {
        *xi *= scale;
    }
    x[0] = beta;
    (tau, beta)
}

fn hypot_scaled(a: f64, b: f64) -> f64 {
    let (a, b) = (a.abs(), b.abs());
    let (big, small) = if a > b { (a, b) } else { (b, a) };
    if big == 0.0 {
        return 0.0;
    }
    let r = small / big;
    big * (1.0 + r * r).sqrt()
}

/// `C <- (I - tau v v^T) C`, one column at a time.
pub fn apply_reflector_left(c: &mut MatMut<'_>, v: &[f64], tau: f64, counter: &mut FlopCounter) {
    debug_assert_eq!(c.rows(), v.len());
    if tau == 0.0 {
        return;
    }
    for j in 0..c.cols() {
        let cj = c.col_mut(j);
        let s = tau * dot(v, cj);
        axpy(cj, -s, v);
    }
    counter.add((2 * v.len() * c.cols()) as u64);
}

/// `C <- C (I - tau v v^T)`.
pub fn apply_reflector_right(c: &mut MatMut<'_>, v: &[f64], tau: f64, counter: &mut FlopCounter) {
    debug_assert_eq!(c.cols(), v.len());
    if tau == 0.0 {
        return;
    }
    let m = c.rows();
    let mut t = vec![0.0; m];
    for (p, &vp) in v.iter().enumerate() {
        if vp != 0.0 {
            axpy(&mut t, vp, c.col(p));
        }
    }
    for (p, &vp) in v.iter().enumerate() {
        if vp != 0.0 {
            axpy(c.col_mut(p), -tau * vp, &t);
        }
    }
    counter.add((2 * m * v.len()) as u64);
}

/// Builds `W` such that `I - W Y^T = H_0 H_1 ... H_{k-1}`.
///
/// `y` must be unit lower trapezoidal (column `p` has a 1 in row `p` and
/// zeros above it).
pub fn build_wy(y: MatRef<'_>, taus: &[f64], counter: &mut FlopCounter) -> Result<Matrix> {
    let (m, k) = (y.rows(), y.cols());
    if taus.len() != k || k > m {
        return shape_err("build_wy", format!("Y {m}x{k} with {} taus", taus.len()));
    }
    let mut w = Matrix::zeros(m, k);
    let mut s = vec![0.0; k];
    for p in 0..k {
        let vp = y.col(p);
        let tau = taus[p];
        if tau == 0.0 {
            continue;
        }
        // w_p = tau * (v_p - W[:, :p] * (Y[:, :p]^T v_p))
        for q in 0..p {
            s[q] = dot(&y.col(q)[p..], &vp[p..]);
        }
        let mut col = vp.to_vec();
        for q in 0..p {
            if s[q] != 0.0 {
                axpy(&mut col, -s[q], w.col(q));
            }
        }
        col.iter_mut().for_each(|x| *x *= tau);
        w.col_mut(p).copy_from_slice(&col);
        counter.add((2 * m * p + m) as u64);
    }
    Ok(w)
}

fn check_block_shapes(c: &MatMut<'_>, w: MatRef<'_>, y: MatRef<'_>, side: Side) -> Result<()> {
    let dim = match side {
        Side::Left => c.rows(),
        Side::Right => c.cols(),
    };
    if w.rows() != dim || y.rows() != dim || w.cols() != y.cols() {
        return shape_err(
            "apply_block_reflector",
            format!(
                "C {}x{}, W {}x{}, Y {}x{} ({side:?})",
                c.rows(),
                c.cols(),
                w.rows(),
                w.cols(),
                y.rows(),
                y.cols()
            ),
        );
    }
    Ok(())
}

/// In-place `C <- op(I - W Y^T) C` or `C <- C op(I - W Y^T)`, where `op`
/// transposes when `transpose` is set.
pub fn apply_block_reflector_inplace(
    c: &mut MatMut<'_>,
    w: MatRef<'_>,
    y: MatRef<'_>,
    side: Side,
    transpose: bool,
    counter: &mut FlopCounter,
) -> Result<()> {
    check_block_shapes(c, w, y, side)?;
    // Q = I - W Y^T, Q^T = I - Y W^T.
    let (first, second) = if transpose { (w, y) } else { (y, w) };
    match side {
        Side::Left => {
            // C -= second * (first^T C)
            let t = {
                let cr = c.rb();
                let mut t = Matrix::zeros(first.cols(), cr.cols());
                gemm(0.0, &mut t.view_mut(), 1.0, first, Op::T, cr, Op::N, counter)?;
                t
            };
            gemm(1.0, c, -1.0, second, Op::N, t.view(), Op::N, counter)?;
        }
        Side::Right => {
            // C Q = C - (C W) Y^T ; C Q^T = C - (C Y) W^T
            let (left, right) = if transpose { (y, w) } else { (w, y) };
            let t = {
                let cr = c.rb();
                let mut t = Matrix::zeros(cr.rows(), left.cols());
                gemm(0.0, &mut t.view_mut(), 1.0, cr, Op::N, left, Op::N, counter)?;
                t
            };
            gemm(1.0, c, -1.0, t.view(), Op::N, right, Op::T, counter)?;
        }
    }
    Ok(())
}

/// Allocating form of [`apply_block_reflector_inplace`].
pub fn apply_block_reflector(
    c: &Matrix,
    w: &Matrix,
    y: &Matrix,
    side: Side,
    transpose: bool,
    counter: &mut FlopCounter,
) -> Result<Matrix> {
    let mut out = c.clone();
    apply_block_reflector_inplace(&mut out.view_mut(), w.view(), y.view(), side, transpose, counter)?;
    Ok(out)
}

/// Block reflector `I - W Y^T` acting on rows `row_offset..row_offset + W.rows()`
/// of the global matrix, produced by one panel factorization.
#[derive(Clone, Debug)]
pub struct ReflectorPanel {
    pub w: Matrix,
    pub y: Matrix,
    /// Filled in by the two-sided update; `None` until then.
    pub z: Option<Matrix>,
    pub taus: Vec<f64>,
    /// First global column of the panel.
    pub col_offset: usize,
    /// First global row the reflector acts on.
    pub row_offset: usize,
}

impl ReflectorPanel {
    pub fn rows(&self) -> usize {
        self.w.rows()
    }

    pub fn width(&self) -> usize {
        self.w.cols()
    }

    pub fn is_identity(&self) -> bool {
        self.taus.iter().all(|&t| t == 0.0)
    }

    /// Checks the unit lower trapezoidal structure of `Y`.
    pub fn check_structure(&self) -> bool {
        let y = &self.y;
        (0..y.cols()).all(|p| y[(p, p)] == 1.0 && (0..p).all(|i| y[(i, p)] == 0.0))
    }

    /// Dense `I - W Y^T`; intended for small checks.
    pub fn dense_q(&self, counter: &mut FlopCounter) -> Result<Matrix> {
        let m = self.rows();
        apply_block_reflector(&Matrix::identity(m), &self.w, &self.y, Side::Left, false, counter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::kernels::matmul_counted;

    const EPS: f64 = f64::EPSILON;

    fn dense_h(v: &[f64], tau: f64) -> Matrix {
        let n = v.len();
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - tau * v[i] * v[j])
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    #[test]
    fn three_four_example() {
        let (v, tau, alpha) = house_vector(&[3.0, 4.0]);
        assert_eq!(alpha, -5.0);
        assert_eq!(v, vec![1.0, 0.5]);
        assert!((tau - 1.6).abs() < 4.0 * EPS);
        let h = dense_h(&v, tau);
        let hx = [h[(0, 0)] * 3.0 + h[(0, 1)] * 4.0, h[(1, 0)] * 3.0 + h[(1, 1)] * 4.0];
        assert!((hx[0] + 5.0).abs() < 1e-14 && hx[1].abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs_give_identity() {
        let (v, tau, alpha) = house_vector(&[1.0, 0.0, 0.0]);
        assert_eq!((tau, alpha), (0.0, 1.0));
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
        let (v, tau, alpha) = house_vector(&[0.0, 0.0]);
        assert_eq!((tau, alpha), (0.0, 0.0));
        assert_eq!(v, vec![1.0, 0.0]);
    }

    #[test]
    fn negative_leading_entry_gives_positive_alpha() {
        let (_, _, alpha) = house_vector(&[-3.0, 4.0]);
        assert_eq!(alpha, 5.0);
    }

    #[test]
    fn reflectors_are_orthogonal() {
        let mut seed = 11u64;
        for len in [2usize, 5, 17, 64] {
            let x: Vec<f64> = (0..len).map(|_| lcg(&mut seed)).collect();
            let (v, tau, _) = house_vector(&x);
            let h = dense_h(&v, tau);
            let mut fc = FlopCounter::new();
            let hth = matmul_counted(&h.transpose(), &h, &mut fc).unwrap();
            let mut diff = hth;
            for i in 0..len {
                diff[(i, i)] -= 1.0;
            }
            assert!(diff.frobenius_norm() <= 16.0 * EPS, "len {len}: {}", diff.frobenius_norm());
        }
    }

    #[test]
    fn block_reflector_matches_dense_reflector() {
        let mut seed = 3u64;
        let c = Matrix::from_fn(4, 4, |_, _| lcg(&mut seed));
        let x: Vec<f64> = (0..4).map(|_| lcg(&mut seed)).collect();
        let (v, tau, _) = house_vector(&x);
        let y = Matrix::from_col_major(4, 1, v.clone()).unwrap();
        let mut fc = FlopCounter::new();
        let w = build_wy(y.view(), &[tau], &mut fc).unwrap();
        let got = apply_block_reflector(&c, &w, &y, Side::Left, false, &mut fc).unwrap();
        let expect = matmul_counted(&dense_h(&v, tau), &c, &mut fc).unwrap();
        assert!(got.max_abs_diff(&expect) < 1e-15);
        let got_r = apply_block_reflector(&c, &w, &y, Side::Right, false, &mut fc).unwrap();
        let expect_r = matmul_counted(&c, &dense_h(&v, tau), &mut fc).unwrap();
        assert!(got_r.max_abs_diff(&expect_r) < 1e-15);
    }

    #[test]
    fn zero_w_leaves_c_unchanged() {
        let c = Matrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        let w = Matrix::zeros(3, 2);
        let y = Matrix::from_fn(3, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let mut fc = FlopCounter::new();
        for side_t in [false, true] {
            let out = apply_block_reflector(&c, &w, &y, Side::Left, side_t, &mut fc).unwrap();
            assert_eq!(out, c);
        }
    }

    #[test]
    fn round_trip_recovers_input() {
        let mut seed = 99u64;
        let m = 7;
        let k = 3;
        let mut y = Matrix::zeros(m, k);
        let mut taus = vec![];
        for p in 0..k {
            let x: Vec<f64> = (0..m - p).map(|_| lcg(&mut seed)).collect();
            let (v, tau, _) = house_vector(&x);
            for (i, vi) in v.iter().enumerate() {
                y[(p + i, p)] = *vi;
            }
            taus.push(tau);
        }
        let mut fc = FlopCounter::new();
        let w = build_wy(y.view(), &taus, &mut fc).unwrap();
        let c = Matrix::from_fn(m, 5, |_, _| lcg(&mut seed));
        for side in [Side::Left, Side::Right] {
            let c = if side == Side::Left { c.clone() } else { c.transpose() };
            let once = apply_block_reflector(&c, &w, &y, side, false, &mut fc).unwrap();
            let back = apply_block_reflector(&once, &w, &y, side, true, &mut fc).unwrap();
            assert!(back.max_abs_diff(&c) <= 8.0 * EPS * c.frobenius_norm());
        }
        let panel = ReflectorPanel { w, y, z: None, taus, col_offset: 0, row_offset: 0 };
        assert!(panel.check_structure());
        let q = panel.dense_q(&mut fc).unwrap();
        let qtq = matmul_counted(&q.transpose(), &q, &mut fc).unwrap();
        assert!(qtq.max_abs_diff(&Matrix::identity(m)) < 1e-14);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut fc = FlopCounter::new();
        let c = Matrix::zeros(3, 3);
        let w = Matrix::zeros(4, 1);
        assert!(apply_block_reflector(&c, &w, &w, Side::Left, false, &mut fc).is_err());
    }
}
