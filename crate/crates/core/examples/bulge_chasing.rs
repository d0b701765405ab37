//! Chases a band matrix down to tridiagonal form, once sequentially and once
//! split across column blocks with an overlap handoff, and compares.
//!
//! Usage: cargo run --release --example bulge_chasing [n] [b] [workers]

use pipevd::bulge::{bc_reduce, bc_reduce_partition, stitch, BandSlab, BulgeReflectorSet};
use pipevd::matgen::{generate, SpectrumKind, SpectrumSpec};
use pipevd::matrix::{BandMatrix, FlopCounter};
use pipevd::pipeline::partition_aligned;
use pipevd::sbr::{sbr_reduce, SbrConfig};

fn main() -> pipevd::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(256);
    let b: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);
    let workers: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let (a, _) = generate(&SpectrumSpec::new(SpectrumKind::Uniform, n, 5))?;
    let mut fc = FlopCounter::new();
    let (band, _): (BandMatrix, _) = sbr_reduce(&a, &SbrConfig::new(b), &mut fc)?;

    let mut fc = FlopCounter::new();
    let (t_seq, u_seq) = bc_reduce(&band, &mut fc)?;
    println!("sequential chase: {} reflectors, {} multiply-adds", u_seq.filled_count(), fc.total());

    let blocks = partition_aligned(n, workers, b)?;
    let mut parts = Vec::new();
    let mut merged = BulgeReflectorSet::new(n, b);
    let mut incoming = None;
    for (w, r) in blocks.iter().enumerate() {
        let slab = BandSlab::from_band(&band, r.start, r.end);
        let last = w + 1 == blocks.len();
        let mut fc = FlopCounter::new();
        let (part, set, out) = bc_reduce_partition(&slab, incoming.take(), last, &mut fc)?;
        let handoff = out.as_ref().map_or(0, |o| o.payload_words() + o.header_words());
        println!("worker {w}: columns {:>4}..{:<4} {:>10} multiply-adds, handoff {handoff} words", r.start, r.end, fc.total());
        parts.push(part);
        merged.merge(&set)?;
        incoming = out;
    }
    let t_par = stitch(&parts)?;
    println!("partitioned result identical: {}", t_par == t_seq && merged == u_seq);
    Ok(())
}
