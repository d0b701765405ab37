//! Generates one test matrix per spectrum family and checks that its
//! eigenvalues match the prescribed spectrum.
//!
//! Usage: cargo run --release --example generate_matrices [n] [seed]

use pipevd::matgen::{generate, SpectrumKind, SpectrumSpec};
use pipevd::verify::{jacobi_eig_oracle, max_eigenvalue_gap};

fn main() -> pipevd::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    println!("{:>10}  {:>11}  {:>11}  {:>9}  {:>9}", "spectrum", "min", "max", "||A||_F", "gap");
    for kind in SpectrumKind::ALL {
        let (a, lambda) = generate(&SpectrumSpec::new(kind, n, seed))?;
        let mut sorted = lambda.clone();
        sorted.sort_by(f64::total_cmp);
        let oracle = jacobi_eig_oracle(&a)?;
        let scale = sorted.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        println!(
            "{kind:>10}  {:>11.4e}  {:>11.4e}  {:>9.3e}  {:>9.2e}",
            sorted[0],
            sorted[n - 1],
            a.frobenius_norm(),
            max_eigenvalue_gap(&sorted, &oracle) / scale,
        );
    }
    Ok(())
}
