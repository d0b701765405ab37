//! Reduces a dense symmetric matrix to band form and checks that the
//! accumulated orthogonal factor maps one onto the other.
//!
//! Usage: cargo run --release --example band_reduction [n] [b]

use pipevd::back::sbr_back_accumulate;
use pipevd::matgen::{generate, SpectrumKind, SpectrumSpec};
use pipevd::matrix::{matmul_op, FlopCounter, Op};
use pipevd::pipeline::{comm_broadcast_words, comm_triangular_words};
use pipevd::sbr::{round_count, sbr_reduce, SbrConfig};
use pipevd::verify::orthogonality;

fn main() -> pipevd::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(256);
    let b: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);
    let (a, _) = generate(&SpectrumSpec::new(SpectrumKind::Normal, n, 1))?;
    let mut fc = FlopCounter::new();
    fc.set_stage("SBR");
    let (band, factors) = sbr_reduce(&a, &SbrConfig::new(b), &mut fc)?;
    println!("n = {n}, b = {b}, panel rounds = {}", round_count(n, b));
    println!("multiply-adds: {} ({:.3} n^3)", fc.total(), fc.total() as f64 / (n as f64).powi(3));
    println!("||A||_F = {:.6e}, ||B||_F = {:.6e}", a.frobenius_norm(), band.frobenius_norm());

    fc.set_stage("SBR-Back");
    let qs = sbr_back_accumulate(&factors, 0..n, &mut fc)?;
    let qta = matmul_op(qs.view(), Op::T, a.matrix().view(), Op::N, &mut fc)?;
    let qtaq = matmul_op(qta.view(), Op::N, qs.view(), Op::N, &mut fc)?;
    let residual = qtaq.max_abs_diff(&band.to_dense()) / a.frobenius_norm();
    println!("max |Qs^T A Qs - B| / ||A||_F = {residual:.2e}");
    println!("orthogonality of Qs = {:.2e}", orthogonality(&qs)?);

    let (nn, bb) = (n as u64, b as u64);
    println!(
        "words moved: trailing-matrix shipping {:.0}, panel broadcast {}",
        comm_triangular_words(nn, bb),
        comm_broadcast_words(nn, bb)
    );
    Ok(())
}
