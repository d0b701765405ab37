use pipevd::back::{
    bc_back_apply, bc_back_apply_sequential, conventional_back_transform, reordered_back_transform, sbr_back_accumulate,
    sbr_back_transposed, Direction,
};
use pipevd::bulge::bc_reduce;
use pipevd::matgen::{generate, SpectrumKind, SpectrumSpec};
use pipevd::matrix::{FlopCounter, Matrix};
use pipevd::sbr::{sbr_reduce, SbrConfig};
use pipevd::tridiag::tridiag_eig;
use pipevd::verify::{backward_error, orthogonality};

fn setup(n: usize, b: usize, seed: u64) -> (pipevd::matrix::SymmetricMatrix, pipevd::sbr::SbrFactors, pipevd::bulge::BulgeReflectorSet, Vec<f64>, Matrix) {
    let (a, _) = generate(&SpectrumSpec::new(SpectrumKind::Uniform, n, seed)).unwrap();
    let mut fc = FlopCounter::new();
    let (band, factors) = sbr_reduce(&a, &SbrConfig::new(b), &mut fc).unwrap();
    let (t, u) = bc_reduce(&band, &mut fc).unwrap();
    let eig = tridiag_eig(&t, true).unwrap();
    (a, factors, u, eig.lambda, eig.q.unwrap())
}

#[test]
fn both_paths_give_accurate_eigenvectors() {
    let (a, f, u, lambda, qd) = setup(40, 4, 3);
    let mut fc = FlopCounter::new();
    let q1 = reordered_back_transform(&f, &u, &qd, 4, &mut fc).unwrap();
    let q2 = conventional_back_transform(&f, &u, &qd, 0..40, 4, &mut fc).unwrap();
    for q in [&q1, &q2] {
        assert!(backward_error(a.matrix(), q, &lambda).unwrap() < 1e-13);
        assert!(orthogonality(q).unwrap() < 1e-13);
    }
    assert!(q1.max_abs_diff(&q2) < 1e-12);
}

#[test]
fn transposed_sbr_back_is_the_transpose() {
    let (_, f, _, _, _) = setup(30, 3, 5);
    let mut fc = FlopCounter::new();
    let qs = sbr_back_accumulate(&f, 0..30, &mut fc).unwrap();
    let qst = sbr_back_transposed(&f, 7..19, &mut fc).unwrap();
    for r in 0..12 {
        for c in 0..30 {
            assert!((qst[(c, r)] - qs[(7 + r, c)]).abs() < 1e-14);
        }
    }
}

#[test]
fn grouping_is_bitwise_neutral() {
    let (_, _, u, _, qd) = setup(37, 5, 9);
    let mut fc = FlopCounter::new();
    for dir in [Direction::Transposed, Direction::Conventional] {
        let mut reference = qd.clone();
        bc_back_apply_sequential(&u, &mut reference, dir, &mut fc).unwrap();
        for g in [1, 2, 4, 6] {
            let mut m = qd.clone();
            bc_back_apply(&u, &mut m, g, dir, &mut fc).unwrap();
            assert_eq!(m, reference, "g = {g}, {dir:?}");
        }
    }
}

#[test]
fn blas2_cost_stays_near_m_n_squared() {
    let n = 64;
    let (_, _, u, _, _) = setup(n, 8, 1);
    let mut fc = FlopCounter::new();
    let m = 16;
    let mut block = Matrix::from_fn(n, m, |i, j| ((i * 7 + j) % 5) as f64);
    bc_back_apply(&u, &mut block, 4, Direction::Transposed, &mut fc).unwrap();
    assert!(fc.total() as f64 <= 2.2 * (m * n * n) as f64, "{}", fc.total());
}
