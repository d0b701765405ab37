//! Runs the threaded solver twice, pipelined and stage-by-stage, and compares
//! wall time, worker idle fractions and accuracy.
//!
//! Usage: cargo run --release --example pipelined_vs_sequential [n] [workers]

use pipevd::matgen::{generate, SpectrumKind, SpectrumSpec};
use pipevd::pipeline::{run, Order, PipelineConfig};
use pipevd::verify::{backward_error, orthogonality};

fn main() -> pipevd::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(512);
    let workers: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let (a, _) = generate(&SpectrumSpec::new(SpectrumKind::Uniform, n, 42))?;
    for order in [Order::Pipelined, Order::Sequential] {
        let out = run(&a, &PipelineConfig::new(workers, 32, order))?;
        let q = out.result.q.as_ref().expect("vectors requested");
        let idle = out.idle_fractions();
        println!(
            "{order:>10}: {:.2}s  mean idle {:.3}  per worker {:?}  backward {:.2e}  orthogonality {:.2e}",
            out.wall_seconds,
            idle.iter().sum::<f64>() / idle.len() as f64,
            idle.iter().map(|f| format!("{f:.2}")).collect::<Vec<_>>(),
            backward_error(a.matrix(), q, &out.result.lambda)?,
            orthogonality(q)?,
        );
    }
    Ok(())
}
