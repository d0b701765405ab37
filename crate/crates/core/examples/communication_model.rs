//! Tabulates band-reduction traffic for trailing-matrix shipping against
//! panel broadcasting, and the bandwidth crossover for a given machine.
//!
//! Usage: cargo run --release --example communication_model [flops_per_s] [bytes_per_s]

use pipevd::pipeline::{comm_broadcast_words, comm_triangular_words, crossover_bandwidth};

fn main() {
    let mut args = std::env::args().skip(1);
    let p: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e13);
    let q: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5e10);
    println!("{:>6} {:>4} {:>16} {:>14} {:>8}", "n", "b", "triangular", "broadcast", "ratio");
    for n in [4096u64, 16384, 65536] {
        for b in [32u64, 64, 128] {
            let tri = comm_triangular_words(n, b);
            let bc = comm_broadcast_words(n, b);
            println!("{n:>6} {b:>4} {tri:>16.4e} {:>14.4e} {:>8.1}", bc as f64, tri / bc as f64);
        }
    }
    println!("broadcast wins for b <= {} at {p:.1e} flop/s and {q:.1e} B/s", crossover_bandwidth(p, q));
}
