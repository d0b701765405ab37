//! Replays the stage graph under a cost model and compares schedules.
//!
//! Usage: `schedule_simulation [workers] [model.json]`

use pipevd::pipeline::{mean_idle_fraction, simulate, CostModel, Order, PipelineConfig};

fn main() -> pipevd::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let workers: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let model = match args.get(2) {
        Some(path) => CostModel::from_json(&std::fs::read_to_string(path)?)?,
        None => CostModel::default(),
    };
    println!("model: n = {}, unit = {}, tick = {} s", model.n, model.unit, model.tick_seconds);

    let mut spans = Vec::new();
    for order in [Order::Pipelined, Order::Sequential, Order::Conventional] {
        let cfg = PipelineConfig::new(workers, 32, order);
        let sim = simulate(&model, &cfg)?;
        let seconds = sim.makespan as f64 * model.tick_seconds;
        println!(
            "{order:<12} makespan {:>12} ticks ({seconds:.3} s), mean idle {:.3}",
            sim.makespan,
            mean_idle_fraction(&sim.events, workers)
        );
        spans.push(sim.makespan as f64);
    }
    println!("pipelined / sequential = {:.3}", spans[0] / spans[1]);

    let unit = CostModel::unit(64);
    let p = simulate(&unit, &PipelineConfig::new(2, 32, Order::Pipelined))?.makespan;
    let s = simulate(&unit, &PipelineConfig::new(2, 32, Order::Sequential))?.makespan;
    println!("unit model, two workers: pipelined {p}, sequential {s}");
    Ok(())
}
