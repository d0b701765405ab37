//! Symmetric test matrices with prescribed spectra, `A = V diag(lambda) V^T`.
//!
//! Random numbers come from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`).
//! Stream 0 drives the orthogonal factor, stream 1 the random spectra.
//! Uniform deviates are `gen::<f64>()` (53 random mantissa bits in `[0, 1)`),
//! and normal deviates use the Box-Muller cosine branch on a pair of them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, EvdError, Result};
use crate::matrix::{gemm, make_reflector, FlopCounter, Matrix, Op, SymmetricMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpectrumKind {
    Cluster0,
    Cluster1,
    Geometric,
    Arithmetic,
    Normal,
    Uniform,
}

impl SpectrumKind {
    pub const ALL: [SpectrumKind; 6] = [
        SpectrumKind::Cluster0,
        SpectrumKind::Cluster1,
        SpectrumKind::Geometric,
        SpectrumKind::Arithmetic,
        SpectrumKind::Normal,
        SpectrumKind::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpectrumKind::Cluster0 => "Cluster0",
            SpectrumKind::Cluster1 => "Cluster1",
            SpectrumKind::Geometric => "Geometric",
            SpectrumKind::Arithmetic => "Arithmetic",
            SpectrumKind::Normal => "Normal",
            SpectrumKind::Uniform => "Uniform",
        }
    }

    /// Whether `cond` and `lambda_max` shape the spectrum.
    pub fn is_conditioned(self) -> bool {
        !matches!(self, SpectrumKind::Normal | SpectrumKind::Uniform)
    }
}

impl fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for SpectrumKind {
    type Err = EvdError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                EvdError::InvalidArgument(format!(
                    "unknown distribution '{s}' (expected one of cluster0, cluster1, geometric, arithmetic, normal, uniform)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub kind: SpectrumKind,
    pub n: usize,
    pub cond: f64,
    pub lambda_max: f64,
    pub seed: u64,
}

impl SpectrumSpec {
    pub fn new(kind: SpectrumKind, n: usize, seed: u64) -> Self {
        Self { kind, n, cond: 1e8, lambda_max: 1e6, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(EvdError::InvalidArgument("n must be at least 1".into()));
        }
        if self.kind.is_conditioned() && !(self.cond >= 1.0 && self.cond.is_finite()) {
            return Err(EvdError::InvalidArgument(format!("cond = {} must be a finite value >= 1", self.cond)));
        }
        if self.kind.is_conditioned() && !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return Err(EvdError::InvalidArgument(format!("lambda_max = {} must be positive", self.lambda_max)));
        }
        Ok(())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal deviate by Box-Muller.
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Eigenvalues for `spec`, ascending.
///
/// With `i = 1..=n`:
/// Cluster0 is `lmax` once and `lmax/cond` n-1 times; Cluster1 is `lmax`
/// n-1 times and `lmax/cond` once; Geometric is `lmax * cond^(-(i-1)/(n-1))`;
/// Arithmetic is `lmax * (1 - (1 - 1/cond) * (i-1)/(n-1))`; Normal and Uniform
/// are i.i.d. N(0,1) and U[-1,1].
pub fn eigen_spectrum(spec: &SpectrumSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.n;
    let (lmax, cond) = (spec.lambda_max, spec.cond);
    let lmin = lmax / cond;
    let mut lam: Vec<f64> = match spec.kind {
        SpectrumKind::Cluster0 => (0..n).map(|i| if i == 0 { lmax } else { lmin }).collect(),
        SpectrumKind::Cluster1 => (0..n).map(|i| if i + 1 < n { lmax } else { lmin }).collect(),
        SpectrumKind::Geometric => (0..n)
            .map(|i| match i {
                0 => lmax,
                _ if i + 1 == n => lmin,
                _ => lmax * cond.powf(-(i as f64) / (n - 1) as f64),
            })
            .collect(),
        SpectrumKind::Arithmetic => (0..n)
            .map(|i| match i {
                0 => lmax,
                _ if i + 1 == n => lmin,
                _ => lmax * (1.0 - (1.0 - 1.0 / cond) * i as f64 / (n - 1) as f64),
            })
            .collect(),
        SpectrumKind::Normal => {
            let mut rng = rng_for(spec.seed, 1);
            (0..n).map(|_| normal(&mut rng)).collect()
        }
        SpectrumKind::Uniform => {
            let mut rng = rng_for(spec.seed, 1);
            (0..n).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect()
        }
    };
    if n == 1 && spec.kind.is_conditioned() {
        lam = vec![lmax];
    }
    lam.sort_by(f64::total_cmp);
    Ok(lam)
}

/// Haar-distributed orthogonal matrix: Householder QR of a Gaussian matrix
/// with the signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(n: usize, seed: u64) -> Matrix {
    let mut rng = rng_for(seed, 0);
    let mut g = Matrix::from_fn(n, n, |_, _| normal(&mut rng));
    let mut taus = vec![0.0; n];
    let mut signs = vec![1.0; n];
    for k in 0..n {
        let (tau, beta) = {
            let col = &mut g.col_mut(k)[k..];
            make_reflector(col)
        };
        taus[k] = tau;
        signs[k] = if beta < 0.0 { -1.0 } else { 1.0 };
        if tau == 0.0 {
            continue;
        }
        let v: Vec<f64> = std::iter::once(1.0).chain(g.col(k)[k + 1..].iter().copied()).collect();
        for j in k + 1..n {
            let cj = &mut g.col_mut(j)[k..];
            let s = tau * v.iter().zip(cj.iter()).map(|(a, b)| a * b).sum::<f64>();
            for (c, vi) in cj.iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
    }
    // Q = H_0 H_1 ... H_{n-1} applied to the identity, last reflector first.
    let mut q = Matrix::identity(n);
    for k in (0..n).rev() {
        let tau = taus[k];
        if tau == 0.0 {
            continue;
        }
        let v: Vec<f64> = std::iter::once(1.0).chain(g.col(k)[k + 1..].iter().copied()).collect();
        for j in k..n {
            let qj = &mut q.col_mut(j)[k..];
            let s = tau * v.iter().zip(qj.iter()).map(|(a, b)| a * b).sum::<f64>();
            for (c, vi) in qj.iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
    }
    for (k, &s) in signs.iter().enumerate() {
        if s < 0.0 {
            q.col_mut(k).iter_mut().for_each(|x| *x = -*x);
        }
    }
    q
}

/// `V diag(lambda) V^T`, averaged with its transpose.
pub fn assemble(v: &Matrix, lambda: &[f64]) -> Result<SymmetricMatrix> {
    let n = v.rows();
    if !v.is_square() || lambda.len() != n {
        return shape_err("assemble", format!("V {}x{} with {} eigenvalues", v.rows(), v.cols(), lambda.len()));
    }
    let vl = Matrix::from_fn(n, n, |i, j| v[(i, j)] * lambda[j]);
    let mut a = Matrix::zeros(n, n);
    let mut fc = FlopCounter::new();
    gemm(0.0, &mut a.view_mut(), 1.0, vl.view(), Op::N, v.view(), Op::T, &mut fc)?;
    SymmetricMatrix::symmetrize(&a)
}

/// Draws the spectrum and orthogonal factor for `spec` and assembles `A`.
pub fn generate(spec: &SpectrumSpec) -> Result<(SymmetricMatrix, Vec<f64>)> {
    let lambda = eigen_spectrum(spec)?;
    let v = random_orthogonal(spec.n, spec.seed);
    Ok((assemble(&v, &lambda)?, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: SpectrumKind, n: usize) -> SpectrumSpec {
        SpectrumSpec::new(kind, n, 1)
    }

    #[test]
    fn geometric_endpoints() {
        assert_eq!(eigen_spectrum(&spec(SpectrumKind::Geometric, 2)).unwrap(), vec![1e-2, 1e6]);
    }

    #[test]
    fn cluster0_has_one_large_eigenvalue() {
        let l = eigen_spectrum(&spec(SpectrumKind::Cluster0, 4)).unwrap();
        assert_eq!(l, vec![1e-2, 1e-2, 1e-2, 1e6]);
        assert!((l[3] / l[0] / 1e8 - 1.0).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn arithmetic_midpoint() {
        let l = eigen_spectrum(&spec(SpectrumKind::Arithmetic, 3)).unwrap();
        assert_eq!((l[0], l[2]), (1e-2, 1e6));
        assert!((l[1] - (5e5 + 5e-3)).abs() <= 1e-10);
    }

    #[test]
    fn names_parse_case_insensitively() {
        assert_eq!("GEOMETRIC".parse::<SpectrumKind>().unwrap(), SpectrumKind::Geometric);
        assert_eq!("cluster1".parse::<SpectrumKind>().unwrap(), SpectrumKind::Cluster1);
        assert!("lognormal".parse::<SpectrumKind>().is_err());
    }

    #[test]
    fn uniform_stays_in_range() {
        let l = eigen_spectrum(&spec(SpectrumKind::Uniform, 200)).unwrap();
        assert!(l.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert!(l.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn orthogonal_factor_is_deterministic_and_orthogonal() {
        let a = random_orthogonal(64, 5);
        assert_eq!(a, random_orthogonal(64, 5));
        assert_ne!(a, random_orthogonal(64, 6));
        let mut fc = FlopCounter::new();
        let mut r = Matrix::identity(64);
        gemm(1.0, &mut r.view_mut(), -1.0, a.view(), Op::T, a.view(), Op::N, &mut fc).unwrap();
        assert!(r.frobenius_norm() / 64.0 <= 4.0 * f64::EPSILON, "{}", r.frobenius_norm());
        let one = random_orthogonal(1, 3);
        assert_eq!(one[(0, 0)].abs(), 1.0);
    }

    #[test]
    fn assemble_hand_cases() {
        let a = assemble(&Matrix::identity(2), &[3.0, 1.0]).unwrap();
        assert_eq!(a.matrix(), &Matrix::from_diag(&[3.0, 1.0]));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let rot = Matrix::from_rows(&[&[s, -s], &[s, s]]);
        let a = assemble(&rot, &[2.0, 0.0]).unwrap();
        assert!(a.matrix().max_abs_diff(&Matrix::from_fn(2, 2, |_, _| 1.0)) < 1e-15);
    }
}
