//! Deterministic discrete-event replay of the stage graph.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::trace::{Stage, TraceEvent, HOST};
use super::{back_plan, partition_aligned, Order, PipelineConfig, Skew};
use crate::error::{EvdError, Result};
use crate::sbr::{round, round_count};

/// Fraction of the peak rate each stage sustains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub sbr: f64,
    pub bc: f64,
    pub sbr_back: f64,
    pub bc_back: f64,
    pub final_multiply: f64,
}

/// Stage durations as functions of the problem shape.
///
/// With `unit` set every stage lasts one tick and transfers are free.
/// Otherwise a stage with `f` multiply-adds and `w` transferred words lasts
/// `2 f / (p * eff) + 8 w / q` seconds, counted in ticks of `tick_seconds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub unit: bool,
    pub n: usize,
    /// Peak compute rate, flop/s.
    pub p: f64,
    /// Link bandwidth, bytes/s.
    pub q: f64,
    /// Host solver rate, flop/s.
    pub solver_rate: f64,
    pub efficiency: Efficiency,
    pub tick_seconds: f64,
}

impl CostModel {
    pub fn unit(n: usize) -> Self {
        Self { unit: true, ..Self::calibrated(n) }
    }

    /// Device-class rates: a compute-bound reduction, a memory-bound bulge
    /// chase, and a fast host solver.
    pub fn calibrated(n: usize) -> Self {
        Self {
            unit: false,
            n,
            p: 1e13,
            q: 0.35e12,
            solver_rate: 2e13,
            efficiency: Efficiency { sbr: 0.5, bc: 0.002, sbr_back: 0.5, bc_back: 0.3, final_multiply: 0.8 },
            tick_seconds: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.efficiency;
        let rates = [self.p, self.q, self.solver_rate, self.tick_seconds, e.sbr, e.bc, e.sbr_back, e.bc_back, e.final_multiply];
        if self.n == 0 || rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(EvdError::InvalidArgument("cost model needs n > 0 and positive finite rates".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: CostModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cost model serializes")
    }

    fn ticks(&self, multiply_adds: f64, eff: f64, words: f64) -> u64 {
        if self.unit {
            return 1;
        }
        let secs = 2.0 * multiply_adds / (self.p * eff) + 8.0 * words / self.q;
        (secs / self.tick_seconds).round() as u64
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self::calibrated(16384)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub events: Vec<TraceEvent>,
    pub makespan: u64,
}

struct Task {
    worker: i64,
    stage: Stage,
    block: usize,
    duration: u64,
    words: u64,
    preds: Vec<usize>,
    /// Lower runs first when a worker has several ready tasks.
    priority: (u8, usize),
}

/// Preemptive priority schedule of `tasks`. At every completion each worker
/// runs its ready task of lowest priority, suspending a lower-priority task
/// if needed. Returns the run segments of each task.
fn schedule(tasks: &[Task]) -> Result<Vec<Vec<(u64, u64)>>> {
    let k = tasks.len();
    let mut succs = vec![Vec::new(); k];
    let mut pending = vec![0usize; k];
    for (i, t) in tasks.iter().enumerate() {
        for &p in &t.preds {
            if p >= k {
                return Err(EvdError::InvalidArgument(format!("task {i} depends on unknown task {p}")));
            }
            succs[p].push(i);
            pending[i] += 1;
        }
    }
    let mut indeg = pending.clone();
    let mut ready: VecDeque<usize> = (0..k).filter(|&i| indeg[i] == 0).collect();
    let mut ordered = 0;
    while let Some(i) = ready.pop_front() {
        ordered += 1;
        for &s in &succs[i] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push_back(s);
            }
        }
    }
    if ordered != k {
        return Err(EvdError::Cycle(format!("{} of {k} simulated tasks are on a dependency cycle", k - ordered)));
    }

    let mut workers: Vec<i64> = tasks.iter().map(|t| t.worker).collect();
    workers.sort_unstable();
    workers.dedup();
    let mut queues: Vec<Vec<usize>> = workers
        .iter()
        .map(|&w| {
            let mut q: Vec<usize> = (0..k).filter(|&i| tasks[i].worker == w).collect();
            q.sort_by_key(|&i| (tasks[i].priority, i));
            q
        })
        .collect();
    let mut remaining: Vec<u64> = tasks.iter().map(|t| t.duration).collect();
    let mut segments = vec![Vec::new(); k];
    // Per worker: running task and the start of its current segment.
    let mut running: Vec<Option<(usize, u64)>> = vec![None; workers.len()];
    let mut now = 0u64;
    let mut finished = 0;
    while finished < k {
        for (slot, queue) in queues.iter_mut().enumerate() {
            let Some(pos) = queue.iter().position(|&i| pending[i] == 0) else {
                continue;
            };
            let best = queue[pos];
            if let Some((cur, since)) = running[slot] {
                if (tasks[cur].priority, cur) <= (tasks[best].priority, best) {
                    continue;
                }
                if now > since {
                    segments[cur].push((since, now));
                }
                remaining[cur] -= now - since;
                queue.push(cur);
                queue.sort_by_key(|&i| (tasks[i].priority, i));
            }
            queue.retain(|&i| i != best);
            running[slot] = Some((best, now));
        }
        let Some(next) = running.iter().flatten().map(|&(i, since)| since + remaining[i]).min() else {
            return Err(EvdError::Cycle("simulation stalled with unfinished tasks".into()));
        };
        now = next;
        for slot in 0..running.len() {
            let Some((i, since)) = running[slot] else {
                continue;
            };
            if since + remaining[i] != now {
                continue;
            }
            if now > since || segments[i].is_empty() {
                segments[i].push((since, now));
            }
            remaining[i] = 0;
            running[slot] = None;
            finished += 1;
            for &s in &succs[i] {
                pending[s] -= 1;
            }
        }
    }
    Ok(segments)
}

fn push(tasks: &mut Vec<Task>, t: Task) -> usize {
    tasks.push(t);
    tasks.len() - 1
}

/// Simulates one solve of the model's problem size under `cfg`.
///
/// Worker `i` runs its band reduction `SBR_i` (after `SBR_{i-1}`), its bulge
/// chasing `BC_i` (after `SBR_i` and `BC_{i-1}`), one `SBR-Back` piece per
/// reduction panel (each after the panel's owner finishes `SBR`), `BC-Back_i`
/// (after every `BC` and its own `SBR-Back`) and `FinalMultiply_i` (after the
/// host solver, which follows every `BC`). Each worker runs the earliest
/// stage among its ready tasks and suspends panel pieces when its bulge
/// chasing becomes ready, so the pieces fill the wait for the handoff. The sequential order makes each stage wait for every
/// worker's previous stage. The unit model treats `SBR-Back_i` as one task.
pub fn simulate(model: &CostModel, cfg: &PipelineConfig) -> Result<SimResult> {
    model.validate()?;
    let n = model.n;
    cfg.validate(n)?;
    let (w, b) = (cfg.workers, cfg.b);
    let blocks = partition_aligned(n, w, b)?;
    let skew = match cfg.back_skew {
        Skew::Fixed(s) => s,
        Skew::Auto => 0.0,
    };
    let rows = back_plan(n, w, skew)?.sizes;
    let nf = n as f64;
    let bf = b as f64;
    let eff = model.efficiency;
    let rounds = round_count(n, b);

    let mut sbr_cost = vec![(0.0f64, 0.0f64); w];
    let mut panel_owner = Vec::with_capacity(rounds);
    let mut panel_size = Vec::with_capacity(rounds);
    for x in 0..rounds {
        let r = round(n, b, x);
        let owner = super::owner_of(&blocks, r.c0);
        let (m, k) = (r.m as f64, r.k as f64);
        sbr_cost[owner].0 += 2.0 * m * bf * k + 4.0 * m * m * k / w as f64;
        if w > 1 {
            sbr_cost[owner].1 += 3.0 * m * k;
        }
        panel_owner.push(owner);
        panel_size.push(m * k);
    }
    // Unit costs use one back piece per worker; otherwise one per panel.
    let pieces: Vec<Option<usize>> = if model.unit || rounds == 0 { vec![None] } else { (0..rounds).map(Some).collect() };

    let conventional = cfg.order == Order::Conventional;
    let sequential = cfg.order == Order::Sequential;
    let (bc_back_rank, sbr_back_rank) = if conventional { (2, 3) } else { (3, 2) };
    let mut tasks: Vec<Task> = Vec::new();

    let mut sbr = Vec::with_capacity(w);
    for i in 0..w {
        let preds = if i > 0 { vec![sbr[i - 1]] } else { vec![] };
        let d = model.ticks(sbr_cost[i].0, eff.sbr, sbr_cost[i].1);
        let words = sbr_cost[i].1 as u64;
        sbr.push(push(&mut tasks, Task { worker: i as i64, stage: Stage::Sbr, block: i, duration: d, words, preds, priority: (0, 0) }));
    }
    let mut bc: Vec<usize> = Vec::with_capacity(w);
    for i in 0..w {
        let (c0, c1) = (blocks[i].start as f64, blocks[i].end as f64);
        let words = if i + 1 < w { 2.0 * bf * bf } else { 0.0 };
        let d = model.ticks(3.0 * bf * (c1 * c1 - c0 * c0), eff.bc, words);
        let mut preds = vec![sbr[i]];
        if i > 0 {
            preds.push(bc[i - 1]);
        }
        if sequential {
            preds.extend(&sbr);
        }
        bc.push(push(&mut tasks, Task { worker: i as i64, stage: Stage::Bc, block: i, duration: d, words: words as u64, preds, priority: (1, 0) }));
    }
    let solver_ticks =
        if model.unit { 1 } else { ((4.0 * nf.powi(3) / model.solver_rate) / model.tick_seconds).round() as u64 };
    let solver = push(&mut tasks, Task {
        worker: HOST,
        stage: Stage::Solver,
        block: 0,
        duration: solver_ticks,
        words: (nf * nf) as u64,
        preds: bc.clone(),
        priority: (0, 0),
    });

    let mut bc_back = vec![0; w];
    let mut sbr_back_last = vec![0; w];
    let mut sbr_back_all = Vec::new();
    for i in 0..w {
        let r = rows[i] as f64;
        let d = model.ticks(nf * nf * r, eff.bc_back, nf * nf);
        let mut preds = bc.clone();
        if conventional {
            preds.push(solver);
        }
        bc_back[i] = push(&mut tasks, Task { worker: i as i64, stage: Stage::BcBack, block: i, duration: d, words: 0, preds, priority: (bc_back_rank, 0) });
        let mut prev: Option<usize> = None;
        for &piece in &pieces {
            let (block, cost, mut preds) = match piece {
                None => (i, 2.0 * nf * nf * r, sbr.clone()),
                Some(x) => (x, 4.0 * panel_size[x] * r, vec![sbr[panel_owner[x]]]),
            };
            preds.extend(prev);
            if sequential {
                preds.extend(&bc);
            }
            if conventional {
                preds.push(bc_back[i]);
            }
            let d = model.ticks(cost, eff.sbr_back, 0.0);
            let id = push(&mut tasks, Task {
                worker: i as i64,
                stage: Stage::SbrBack,
                block,
                duration: d,
                words: 0,
                preds,
                priority: (sbr_back_rank, piece.unwrap_or(0)),
            });
            sbr_back_all.push(id);
            prev = Some(id);
        }
        sbr_back_last[i] = prev.expect("at least one back piece");
    }
    for i in 0..w {
        if conventional {
            continue;
        }
        let preds = if sequential { sbr_back_all.clone() } else { vec![sbr_back_last[i]] };
        tasks[bc_back[i]].preds.extend(preds);
    }
    for i in 0..w {
        let r = rows[i] as f64;
        let d = if conventional { 0 } else { model.ticks(nf * nf * r, eff.final_multiply, r * nf) };
        let mut preds = vec![bc_back[i], sbr_back_last[i], solver];
        if sequential {
            preds.extend(&bc_back);
        }
        let words = (r * nf) as u64;
        push(&mut tasks, Task { worker: i as i64, stage: Stage::FinalMultiply, block: i, duration: d, words, preds, priority: (4, 0) });
    }

    let segments = schedule(&tasks)?;
    let makespan = segments.iter().flatten().map(|s| s.1).max().unwrap_or(0);
    let mut events: Vec<TraceEvent> = Vec::new();
    for (t, segs) in tasks.iter().zip(&segments) {
        if conventional && t.stage == Stage::FinalMultiply {
            continue;
        }
        for (n, &(s, e)) in segs.iter().enumerate() {
            let words = if n == 0 { t.words } else { 0 };
            events.push(TraceEvent { worker: t.worker, stage: t.stage, block: t.block, t_start: s, t_end: e, words });
        }
    }
    events.sort_by_key(|e| (e.t_start, e.worker, e.stage, e.block));
    Ok(SimResult { events, makespan })
}

/// The band-reduction chain of a simulated trace.
pub fn sim_chain(workers: usize) -> Vec<(usize, usize)> {
    (0..workers).map(|i| (i, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::trace::{validate_trace, TraceRules};

    fn cfg(w: usize, order: Order) -> PipelineConfig {
        PipelineConfig::new(w, 4, order)
    }

    #[test]
    fn unit_model_makespans() {
        let m = CostModel::unit(64);
        assert_eq!(simulate(&m, &cfg(2, Order::Pipelined)).unwrap().makespan, 6);
        assert_eq!(simulate(&m, &cfg(2, Order::Sequential)).unwrap().makespan, 7);
        assert_eq!(simulate(&m, &cfg(1, Order::Pipelined)).unwrap().makespan, 5);
        assert_eq!(simulate(&m, &cfg(1, Order::Sequential)).unwrap().makespan, 5);
    }

    #[test]
    fn simulated_traces_are_valid() {
        for order in [Order::Pipelined, Order::Sequential, Order::Conventional] {
            for w in [1, 2, 4] {
                let r = simulate(&CostModel::calibrated(1024), &PipelineConfig::new(w, 32, order)).unwrap();
                validate_trace(&r.events, &TraceRules { workers: w, sbr_chain: sim_chain(w) }, None).unwrap();
            }
        }
    }

    #[test]
    fn cycle_is_reported() {
        let t = |preds| Task { worker: 0, stage: Stage::Sbr, block: 0, duration: 1, words: 0, preds, priority: (0, 0) };
        assert!(matches!(schedule(&[t(vec![1]), t(vec![0])]), Err(EvdError::Cycle(_))));
    }

    #[test]
    fn json_round_trip() {
        let m = CostModel::default();
        assert_eq!(CostModel::from_json(&m.to_json()).unwrap(), m);
        assert!(CostModel::from_json("{}").is_err());
    }
}
