//! Compares the reordered back transformation, which folds both reflector
//! sets into one matrix before a single multiply, with the conventional one.
//!
//! Usage: cargo run --release --example back_transformation [n] [b]

use pipevd::back::{conventional_back_transform, reordered_back_transform, DEFAULT_GROUP};
use pipevd::bulge::bc_reduce;
use pipevd::matgen::{generate, SpectrumKind, SpectrumSpec};
use pipevd::matrix::FlopCounter;
use pipevd::sbr::{sbr_reduce, SbrConfig};
use pipevd::tridiag::tridiag_eig;
use pipevd::verify::{backward_error, orthogonality};

fn main() -> pipevd::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(384);
    let b: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);
    let (a, _) = generate(&SpectrumSpec::new(SpectrumKind::Geometric, n, 9))?;
    let mut fc = FlopCounter::new();
    let (band, factors) = sbr_reduce(&a, &SbrConfig::new(b), &mut fc)?;
    let (t, u) = bc_reduce(&band, &mut fc)?;
    let res = tridiag_eig(&t, true)?;
    let q_d = res.q.as_ref().expect("vectors requested");

    let mut fc_r = FlopCounter::new();
    let q_r = reordered_back_transform(&factors, &u, q_d, DEFAULT_GROUP, &mut fc_r)?;
    let mut fc_c = FlopCounter::new();
    let q_c = conventional_back_transform(&factors, &u, q_d, 0..n, DEFAULT_GROUP, &mut fc_c)?;
    let n3 = (n as f64).powi(3);
    for (name, q, fc) in [("reordered", &q_r, &fc_r), ("conventional", &q_c, &fc_c)] {
        println!(
            "{name:>12}: {:.3} n^3 multiply-adds, backward {:.2e}, orthogonality {:.2e}",
            fc.total() as f64 / n3,
            backward_error(a.matrix(), q, &res.lambda)?,
            orthogonality(q)?,
        );
    }
    println!("max |Q_reordered - Q_conventional| = {:.2e}", q_r.max_abs_diff(&q_c));
    Ok(())
}
