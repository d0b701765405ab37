//! Solves one matrix, writes its NDJSON timeline, validates the schedule and
//! prints busy time per worker and stage.
//!
//! Usage: cargo run --release --example trace_summary [n] [workers] [order] [trace.ndjson]

use std::collections::BTreeMap;

use pipevd::matgen::{generate, SpectrumKind, SpectrumSpec};
use pipevd::pipeline::{run, validate_trace, Order, PipelineConfig, Stage};

fn main() -> pipevd::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(256);
    let workers: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let order: Order = args.next().map(|s| s.parse()).transpose()?.unwrap_or(Order::Pipelined);
    let path = args.next().unwrap_or_else(|| "trace.ndjson".into());
    let (a, _) = generate(&SpectrumSpec::new(SpectrumKind::Geometric, n, 1))?;
    let cfg = PipelineConfig { trace_path: Some(path.clone().into()), ..PipelineConfig::new(workers, 32.min(n / 2), order) };
    let out = run(&a, &cfg)?;
    match validate_trace(&out.trace, &out.rules(), Some(&out.ledger)) {
        Ok(()) => println!("trace valid ({} events) -> {path}", out.trace.len()),
        Err(v) => println!("trace INVALID: {v}"),
    }
    let mut busy: BTreeMap<(i64, Stage), u64> = BTreeMap::new();
    for e in out.trace.iter().filter(|e| e.stage != Stage::Comm) {
        *busy.entry((e.worker, e.stage)).or_default() += e.duration();
    }
    println!("makespan {:.3}s", out.wall_seconds);
    for ((worker, stage), ns) in busy {
        let who = if worker < 0 { "host".to_string() } else { format!("w{worker}") };
        println!("{who:>5} {stage:<14} {:>9.3}s", ns as f64 * 1e-9);
    }
    print!("{}", out.flops.to_csv());
    Ok(())
}
