//! Library results checked against naive dense evaluations and the Jacobi
//! eigenvalue oracle.

use pipevd::back::{bc_back_apply, final_gemm, reordered_back_transform, sbr_back_accumulate, sequential_order, Direction};
use pipevd::bulge::{bc_reduce, BulgeReflectorSet};
use pipevd::matgen::{assemble, eigen_spectrum, generate, random_orthogonal, SpectrumKind, SpectrumSpec};
use pipevd::matrix::{house_vector, BandMatrix, FlopCounter, Matrix, SymmetricMatrix, TridiagonalMatrix};
use pipevd::sbr::{form_z, sbr_reduce, SbrConfig};
use pipevd::tridiag::tridiag_eig;
use pipevd::verify::{backward_error, check_gemm_bounds, gemm_bound_metric, jacobi_eig_oracle, orthogonality};

const EPS: f64 = f64::EPSILON;

/// SplitMix64 deviates in `[-1, 1)`.
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }

    fn matrix(&mut self, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| self.next())
    }

    fn symmetric(&mut self, n: usize) -> Matrix {
        let m = self.matrix(n, n);
        Matrix::from_fn(n, n, |i, j| if i >= j { m[(i, j)] } else { m[(j, i)] })
    }
}

fn naive_mul(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn assembled_matrix_has_the_prescribed_spectrum() {
    let spec = SpectrumSpec::new(SpectrumKind::Geometric, 16, 11);
    let (a, lambda) = generate(&spec).unwrap();
    let got = jacobi_eig_oracle(&a).unwrap();
    assert!(max_gap(&got, &sorted(lambda)) <= 1e-12 * 1e6);
}

#[test]
fn spectra_follow_their_definitions() {
    let spec = |kind, n| SpectrumSpec::new(kind, n, 0);
    assert_eq!(sorted(eigen_spectrum(&spec(SpectrumKind::Geometric, 2)).unwrap()), vec![1e-2, 1e6]);
    assert_eq!(sorted(eigen_spectrum(&spec(SpectrumKind::Cluster0, 4)).unwrap()), vec![1e-2, 1e-2, 1e-2, 1e6]);
    let ar = sorted(eigen_spectrum(&spec(SpectrumKind::Arithmetic, 3)).unwrap());
    assert_eq!((ar[0], ar[2]), (1e-2, 1e6));
    assert!((ar[1] - (5e5 + 5e-3)).abs() <= 4.0 * EPS * 1e6);
}

#[test]
fn rotation_assembles_by_hand() {
    let s = 0.5f64.sqrt();
    let v = Matrix::from_rows(&[&[s, -s], &[s, s]]);
    let a = assemble(&v, &[2.0, 0.0]).unwrap();
    for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        assert!((a.matrix()[(i, j)] - 1.0).abs() <= 4.0 * EPS);
    }
}

#[test]
fn z_matches_a_naive_evaluation() {
    let mut rng = Rng(5);
    let (m, k) = (6, 2);
    let a = rng.symmetric(m);
    let w = rng.matrix(m, k);
    let y = Matrix::from_fn(m, k, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => 0.0,
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => rng.next(),
    });
    let mut fc = FlopCounter::new();
    let z = form_z(a.view(), w.view(), y.view(), &mut fc).unwrap();

    let aw = naive_mul(&a, &w);
    let wtaw = naive_mul(&w.transpose(), &aw);
    let ywtaw = naive_mul(&y, &wtaw);
    let abs = |x: &Matrix| Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)].abs());
    let scale = {
        let aw_abs = naive_mul(&abs(&a), &abs(&w));
        let inner = naive_mul(&abs(&w).transpose(), &aw_abs);
        let t = naive_mul(&abs(&y), &inner);
        Matrix::from_fn(m, k, |i, j| aw_abs[(i, j)] + 0.5 * t[(i, j)])
    };
    for i in 0..m {
        for j in 0..k {
            let want = aw[(i, j)] - 0.5 * ywtaw[(i, j)];
            assert!((z[(i, j)] - want).abs() <= 4.0 * EPS * m as f64 * scale[(i, j)], "({i},{j})");
        }
    }

    let id = Matrix::identity(m);
    let z_id = form_z(id.view(), w.view(), y.view(), &mut fc).unwrap();
    let wtw = naive_mul(&w.transpose(), &w);
    let ywtw = naive_mul(&y, &wtw);
    for i in 0..m {
        for j in 0..k {
            assert!((z_id[(i, j)] - (w[(i, j)] - 0.5 * ywtw[(i, j)])).abs() <= 8.0 * EPS * scale[(i, j)].max(1.0));
        }
    }
}

#[test]
fn band_reduction_keeps_the_spectrum_and_is_a_similarity() {
    let (n, b) = (24, 4);
    let (a, lambda) = generate(&SpectrumSpec::new(SpectrumKind::Geometric, n, 2)).unwrap();
    let mut fc = FlopCounter::new();
    let (band, factors) = sbr_reduce(&a, &SbrConfig::new(b), &mut fc).unwrap();
    let dense = band.to_dense();
    for i in 0..n {
        for j in 0..n {
            if i.abs_diff(j) > b {
                assert_eq!(dense[(i, j)], 0.0);
            }
        }
    }
    let got = jacobi_eig_oracle(&SymmetricMatrix::new(dense.clone()).unwrap()).unwrap();
    assert!(max_gap(&got, &sorted(lambda)) <= 1e-12 * 1e6);

    let qs = sbr_back_accumulate(&factors, 0..n, &mut fc).unwrap();
    let back = naive_mul(&naive_mul(&qs.transpose(), a.matrix()), &qs);
    assert!(back.max_abs_diff(&dense) <= 1e-12 * a.frobenius_norm());
}

#[test]
fn single_panel_accumulation_is_the_dense_block_reflector() {
    let n = 6;
    let a = SymmetricMatrix::new(Rng(9).symmetric(n)).unwrap();
    let mut fc = FlopCounter::new();
    let (_, factors) = sbr_reduce(&a, &SbrConfig::new(3), &mut fc).unwrap();
    assert_eq!(factors.panels.len(), 1);
    let p = &factors.panels[0];
    let mut want = Matrix::identity(n);
    let wy = naive_mul(&p.w, &p.y.transpose());
    for i in 0..p.rows() {
        for j in 0..p.rows() {
            want[(p.row_offset + i, p.row_offset + j)] -= wy[(i, j)];
        }
    }
    let got = sbr_back_accumulate(&factors, 0..n, &mut fc).unwrap();
    assert!(got.max_abs_diff(&want) <= 4.0 * EPS);
}

fn random_band(n: usize, b: usize, seed: u64) -> BandMatrix {
    let mut rng = Rng(seed);
    let mut band = BandMatrix::zeros(n, b);
    for j in 0..n {
        for i in j..(j + b + 1).min(n) {
            band.set(i, j, rng.next());
        }
    }
    band
}

#[test]
fn bulge_chasing_keeps_the_spectrum() {
    let band = random_band(6, 2, 4);
    let mut fc = FlopCounter::new();
    let (t, _) = bc_reduce(&band, &mut fc).unwrap();
    let want = jacobi_eig_oracle(&SymmetricMatrix::new(band.to_dense()).unwrap()).unwrap();
    let got = jacobi_eig_oracle(&SymmetricMatrix::new(t.to_dense()).unwrap()).unwrap();
    let norm2 = want.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(max_gap(&got, &want) <= 1e-12 * norm2);
}

#[test]
fn tridiagonal_qr_matches_jacobi() {
    let mut rng = Rng(21);
    for _ in 0..3 {
        let n = 32;
        let d: Vec<f64> = (0..n).map(|_| rng.next()).collect();
        let e: Vec<f64> = (0..n - 1).map(|_| rng.next()).collect();
        let t = TridiagonalMatrix::new(d, e).unwrap();
        let got = tridiag_eig(&t, true).unwrap();
        let want = jacobi_eig_oracle(&SymmetricMatrix::new(t.to_dense()).unwrap()).unwrap();
        let norm2 = want.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max_gap(&got.lambda, &want) <= 1e-12 * norm2);
        assert!(orthogonality(got.q.as_ref().unwrap()).unwrap() <= 2.0 * EPS * 16.0);
    }
}

#[test]
fn single_bulge_reflector_is_the_dense_householder_matrix() {
    let (n, b) = (10, 3);
    let mut u = BulgeReflectorSet::new(n, b);
    let order = sequential_order(&u, Direction::Transposed);
    let target = order[order.len() / 2];
    let (st, len) = u.span(target.0, target.1);
    let x: Vec<f64> = (0..len).map(|i| 1.0 + i as f64).collect();
    let (v, tau, _) = house_vector(&x);
    for &(i, j) in &order {
        let l = u.span(i, j).1;
        let mut e = vec![0.0; l];
        e[0] = 1.0;
        if (i, j) == target {
            u.set(i, j, tau, &v).unwrap();
        } else {
            u.set(i, j, 0.0, &e).unwrap();
        }
    }
    let m = random_orthogonal(n, 3).transpose();
    let mut h = Matrix::identity(n);
    for r in 0..len {
        for c in 0..len {
            h[(st + r, st + c)] -= tau * v[r] * v[c];
        }
    }
    let want = naive_mul(&h, &m);
    for dir in [Direction::Conventional, Direction::Transposed] {
        let mut got = m.clone();
        bc_back_apply(&u, &mut got, 4, dir, &mut FlopCounter::new()).unwrap();
        assert!(got.max_abs_diff(&want) <= 8.0 * EPS);
    }
    let mut untouched = m.clone();
    let empty = BulgeReflectorSet::new(n, 1);
    bc_back_apply(&empty, &mut untouched, 4, Direction::Conventional, &mut FlopCounter::new()).unwrap();
    assert_eq!(untouched, m);
}

#[test]
fn final_multiply_cases() {
    let mut fc = FlopCounter::new();
    let q_sb = random_orthogonal(8, 1);
    assert_eq!(final_gemm(&q_sb, &Matrix::identity(8), &mut fc).unwrap(), q_sb);
    let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
    let b = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
    assert_eq!(final_gemm(&a, &b, &mut fc).unwrap(), Matrix::from_rows(&[&[2.0, 1.0], &[4.0, 3.0]]));

    let (a, _) = generate(&SpectrumSpec::new(SpectrumKind::Normal, 16, 8)).unwrap();
    let (band, factors) = sbr_reduce(&a, &SbrConfig::new(3), &mut fc).unwrap();
    let (t, u) = bc_reduce(&band, &mut fc).unwrap();
    let eig = tridiag_eig(&t, true).unwrap();
    let q = reordered_back_transform(&factors, &u, eig.q.as_ref().unwrap(), 4, &mut fc).unwrap();
    let qtq = naive_mul(&q.transpose(), &q);
    let resid = (0..16)
        .flat_map(|i| (0..16).map(move |j| (i, j)))
        .map(|(i, j)| (qtq[(i, j)] - if i == j { 1.0 } else { 0.0 }).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(resid / 16.0 <= 2.0 * EPS * 16.0);
}

#[test]
fn verify_metrics_on_known_inputs() {
    let n = 24;
    let v = random_orthogonal(n, 6);
    let lambda = eigen_spectrum(&SpectrumSpec::new(SpectrumKind::Uniform, n, 6)).unwrap();
    let a = assemble(&v, &lambda).unwrap();
    assert!(backward_error(a.matrix(), &v, &lambda).unwrap() <= 4.0 * n as f64 * EPS);

    let haar = random_orthogonal(64, 2);
    assert!(orthogonality(&haar).unwrap() <= 2.0 * EPS * 16.0);
    assert_eq!(orthogonality(&Matrix::identity(5)).unwrap(), 0.0);
    let two = Matrix::from_diag(&[2.0, 2.0]);
    assert!((orthogonality(&two).unwrap() - 3.0 * 2f64.sqrt() / 2.0).abs() <= 4.0 * EPS);

    let (q1, q2) = (random_orthogonal(128, 3), random_orthogonal(128, 4));
    assert!(check_gemm_bounds(&q1, &q2, 16.0));
    assert_eq!(gemm_bound_metric(&Matrix::identity(4), &Matrix::identity(4)).unwrap(), 0.0);
}
