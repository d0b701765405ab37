//! Timeline events, their NDJSON form and the schedule validator.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::comm::{CommLedger, Endpoint};
use crate::error::{EvdError, Result};

/// Worker index used for the host.
pub const HOST: i64 = -1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "SBR")]
    Sbr,
    #[serde(rename = "BC")]
    Bc,
    #[serde(rename = "SBR-Back")]
    SbrBack,
    #[serde(rename = "BC-Back")]
    BcBack,
    Solver,
    FinalMultiply,
    Comm,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Sbr, Stage::Bc, Stage::SbrBack, Stage::BcBack, Stage::Solver, Stage::FinalMultiply, Stage::Comm];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Sbr => "SBR",
            Stage::Bc => "BC",
            Stage::SbrBack => "SBR-Back",
            Stage::BcBack => "BC-Back",
            Stage::Solver => "Solver",
            Stage::FinalMultiply => "FinalMultiply",
            Stage::Comm => "Comm",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Stage {
    type Err = EvdError;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| EvdError::InvalidArgument(format!("unknown stage '{s}'")))
    }
}

/// One interval of work (or one message, for `Comm`) on a worker's timeline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub worker: i64,
    pub stage: Stage,
    pub block: usize,
    pub t_start: u64,
    pub t_end: u64,
    pub words: u64,
}

impl TraceEvent {
    pub fn new(worker: i64, stage: Stage, block: usize, t_start: u64, t_end: u64) -> Self {
        Self { worker, stage, block, t_start, t_end, words: 0 }
    }

    pub fn duration(&self) -> u64 {
        self.t_end.saturating_sub(self.t_start)
    }
}

pub fn to_ndjson(events: &[TraceEvent]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).expect("trace events serialize"));
        s.push('\n');
    }
    s
}

pub fn write_ndjson(path: impl AsRef<Path>, events: &[TraceEvent]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(to_ndjson(events).as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn parse_ndjson(text: &str) -> Result<Vec<TraceEvent>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

/// Structural expectations a trace is checked against.
#[derive(Clone, Debug)]
pub struct TraceRules {
    pub workers: usize,
    /// `(worker, block)` of the band-reduction events that must run one
    /// after another.
    pub sbr_chain: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{rule}: {detail}")]
pub struct TraceViolation {
    pub rule: &'static str,
    pub detail: String,
}

fn violation<T>(rule: &'static str, detail: String) -> std::result::Result<T, TraceViolation> {
    Err(TraceViolation { rule, detail })
}

/// Checks the schedule encoded by `events`:
/// no two work intervals overlap on one worker, band reduction follows its
/// chain, each worker chases bulges once and after its predecessor, bulge
/// back transformation waits for every worker's bulge chasing, and final
/// multiplies wait for the solver. With a ledger, also checks that each
/// worker boundary carries exactly one overlap message.
pub fn validate_trace(
    events: &[TraceEvent],
    rules: &TraceRules,
    ledger: Option<&CommLedger>,
) -> std::result::Result<(), TraceViolation> {
    let w = rules.workers as i64;
    for e in events {
        if e.t_start > e.t_end {
            return violation("interval", format!("{e:?} ends before it starts"));
        }
        if e.worker < HOST || e.worker >= w {
            return violation("worker", format!("{e:?} names an unknown worker"));
        }
    }
    for worker in HOST..w {
        let mut own: Vec<&TraceEvent> = events.iter().filter(|e| e.worker == worker && e.stage != Stage::Comm).collect();
        own.sort_by_key(|e| (e.t_start, e.t_end));
        for pair in own.windows(2) {
            if pair[1].t_start < pair[0].t_end {
                return violation("overlap", format!("{:?} overlaps {:?}", pair[0], pair[1]));
            }
        }
    }
    let find = |worker: usize, stage: Stage, block: usize| {
        events.iter().find(|e| e.worker == worker as i64 && e.stage == stage && e.block == block)
    };
    for pair in rules.sbr_chain.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (Some(ea), Some(eb)) = (find(a.0, Stage::Sbr, a.1), find(b.0, Stage::Sbr, b.1)) else {
            return violation("sbr-chain", format!("missing band reduction event for {a:?} or {b:?}"));
        };
        if eb.t_start < ea.t_end {
            return violation("sbr-chain", format!("{eb:?} starts before {ea:?} ends"));
        }
    }
    let mut bc_end_max = None;
    let mut prev_bc: Option<&TraceEvent> = None;
    for k in 0..rules.workers {
        let bcs: Vec<&TraceEvent> = events.iter().filter(|e| e.worker == k as i64 && e.stage == Stage::Bc).collect();
        if bcs.is_empty() {
            continue;
        }
        if bcs.len() != 1 || bcs[0].block != k {
            return violation("bc-handoff", format!("worker {k} has {} bulge chasing events", bcs.len()));
        }
        let bc = bcs[0];
        if let Some(p) = prev_bc {
            if bc.t_start < p.t_end {
                return violation("bc-handoff", format!("{bc:?} starts before its predecessor {p:?} ends"));
            }
        }
        if let Some(last_sbr) =
            events.iter().filter(|e| e.worker == k as i64 && e.stage == Stage::Sbr).map(|e| e.t_end).max()
        {
            if bc.t_start < last_sbr {
                return violation("bc-after-sbr", format!("{bc:?} starts before worker {k} finishes band reduction"));
            }
        }
        bc_end_max = bc_end_max.max(Some(bc.t_end));
        prev_bc = Some(bc);
    }
    if let Some(bc_end) = bc_end_max {
        if let Some(e) = events.iter().find(|e| e.stage == Stage::BcBack && e.t_start < bc_end) {
            return violation("bc-back-gather", format!("{e:?} starts before all bulge chasing ends at {bc_end}"));
        }
    }
    let finals: Vec<&TraceEvent> = events.iter().filter(|e| e.stage == Stage::FinalMultiply).collect();
    if !finals.is_empty() {
        let Some(solver_end) = events.iter().filter(|e| e.stage == Stage::Solver).map(|e| e.t_end).max() else {
            return violation("final-after-solver", "final multiplies without a solver event".into());
        };
        if let Some(e) = finals.iter().find(|e| e.t_start < solver_end) {
            return violation("final-after-solver", format!("{e:?} starts before the solver ends at {solver_end}"));
        }
    }
    if let Some(ledger) = ledger {
        for k in 1..rules.workers {
            let m = ledger.channel(Endpoint::Worker(k - 1), Endpoint::Worker(k), "BC").messages;
            if m != 1 {
                return violation("overlap-message", format!("boundary {}->{k} carried {m} overlap messages", k - 1));
            }
        }
    }
    Ok(())
}

/// Per-worker `1 - busy / makespan`, where busy time excludes `Comm` and the
/// makespan spans every event in the trace.
pub fn idle_fractions(events: &[TraceEvent], workers: usize) -> Vec<f64> {
    let start = events.iter().map(|e| e.t_start).min().unwrap_or(0);
    let end = events.iter().map(|e| e.t_end).max().unwrap_or(0);
    let span = (end - start) as f64;
    (0..workers)
        .map(|k| {
            if span == 0.0 {
                return 0.0;
            }
            let busy: u64 = events
                .iter()
                .filter(|e| e.worker == k as i64 && e.stage != Stage::Comm)
                .map(TraceEvent::duration)
                .sum();
            1.0 - busy as f64 / span
        })
        .collect()
}

pub fn mean_idle_fraction(events: &[TraceEvent], workers: usize) -> f64 {
    let f = idle_fractions(events, workers);
    if f.is_empty() {
        0.0
    } else {
        f.iter().sum::<f64>() / f.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(worker: i64, stage: Stage, block: usize, a: u64, b: u64) -> TraceEvent {
        TraceEvent::new(worker, stage, block, a, b)
    }

    fn rules() -> TraceRules {
        TraceRules { workers: 2, sbr_chain: vec![(0, 0), (1, 1)] }
    }

    fn good() -> Vec<TraceEvent> {
        vec![
            ev(0, Stage::Sbr, 0, 0, 1),
            ev(1, Stage::Sbr, 1, 1, 2),
            ev(0, Stage::Bc, 0, 1, 2),
            ev(1, Stage::Bc, 1, 2, 3),
            ev(-1, Stage::Solver, 0, 3, 4),
            ev(0, Stage::BcBack, 0, 3, 4),
            ev(0, Stage::FinalMultiply, 0, 4, 5),
        ]
    }

    #[test]
    fn accepts_a_valid_schedule_and_round_trips() {
        let events = good();
        validate_trace(&events, &rules(), None).unwrap();
        assert_eq!(parse_ndjson(&to_ndjson(&events)).unwrap(), events);
        assert!(to_ndjson(&events[..1]).starts_with(r#"{"worker":0,"stage":"SBR","block":0,"t_start":0,"t_end":1,"words":0}"#));
    }

    #[test]
    fn rejects_each_broken_rule() {
        let cases: Vec<(usize, TraceEvent, &str)> = vec![
            (1, ev(1, Stage::Sbr, 1, 0, 2), "sbr-chain"),
            (2, ev(0, Stage::Bc, 0, 1, 3), "bc-handoff"),
            (5, ev(0, Stage::BcBack, 0, 2, 3), "bc-back-gather"),
            (6, ev(0, Stage::FinalMultiply, 0, 3, 5), "overlap"),
        ];
        for (idx, replacement, rule) in cases {
            let mut events = good();
            events[idx] = replacement;
            assert_eq!(validate_trace(&events, &rules(), None).unwrap_err().rule, rule);
        }
        let mut events = good();
        events[6] = ev(1, Stage::FinalMultiply, 0, 3, 5);
        assert_eq!(validate_trace(&events, &rules(), None).unwrap_err().rule, "final-after-solver");
        let mut events = good();
        events[5] = ev(1, Stage::BcBack, 0, 2, 3);
        assert!(validate_trace(&events, &rules(), None).is_err());
    }

    #[test]
    fn idle_fraction_counts_work_only() {
        let events = vec![ev(0, Stage::Sbr, 0, 0, 4), ev(1, Stage::Sbr, 0, 0, 1), ev(1, Stage::Comm, 0, 1, 4)];
        assert_eq!(idle_fractions(&events, 2), vec![0.0, 0.75]);
    }
}
