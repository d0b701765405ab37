//! Counted communication: the ledger of words crossing worker channels and
//! the analytic volume models for band reduction.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Source or destination of a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Worker(usize),
    Host,
    /// Broadcast to every other worker, counted once.
    All,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Worker(i) => write!(f, "w{i}"),
            Endpoint::Host => f.write_str("host"),
            Endpoint::All => f.write_str("all"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub words: u64,
    pub messages: u64,
}

/// Words (FP64 values) sent per directed channel and stage. Bookkeeping
/// entries such as indices are tallied separately as headers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommLedger {
    channels: BTreeMap<(Endpoint, Endpoint, String), ChannelStats>,
    headers: BTreeMap<String, u64>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, src: Endpoint, dst: Endpoint, stage: &str, words: u64) {
        let e = self.channels.entry((src, dst, stage.to_string())).or_default();
        e.words += words;
        e.messages += 1;
    }

    pub fn record_header(&mut self, stage: &str, words: u64) {
        *self.headers.entry(stage.to_string()).or_default() += words;
    }

    pub fn channel(&self, src: Endpoint, dst: Endpoint, stage: &str) -> ChannelStats {
        self.channels.get(&(src, dst, stage.to_string())).copied().unwrap_or_default()
    }

    pub fn stage_words(&self, stage: &str) -> u64 {
        self.channels.iter().filter(|((_, _, s), _)| s == stage).map(|(_, c)| c.words).sum()
    }

    pub fn stage_messages(&self, stage: &str) -> u64 {
        self.channels.iter().filter(|((_, _, s), _)| s == stage).map(|(_, c)| c.messages).sum()
    }

    pub fn header_words(&self, stage: &str) -> u64 {
        self.headers.get(stage).copied().unwrap_or(0)
    }

    pub fn total_words(&self) -> u64 {
        self.channels.values().map(|c| c.words).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Endpoint, &Endpoint, &str, &ChannelStats)> {
        self.channels.iter().map(|((s, d, st), c)| (s, d, st.as_str(), c))
    }

    /// Per-stage word totals.
    pub fn by_stage(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for ((_, _, s), c) in &self.channels {
            *out.entry(s.clone()).or_default() += c.words;
        }
        out
    }

    pub fn merge(&mut self, other: &CommLedger) {
        for (k, c) in &other.channels {
            let e = self.channels.entry(k.clone()).or_default();
            e.words += c.words;
            e.messages += c.messages;
        }
        for (k, h) in &other.headers {
            *self.headers.entry(k.clone()).or_default() += h;
        }
    }

    /// `src,dst,stage,words`, one line per channel and stage.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("src,dst,stage,words\n");
        for ((src, dst, stage), c) in &self.channels {
            s.push_str(&format!("{src},{dst},{stage},{}\n", c.words));
        }
        s
    }
}

/// Words moved by a triangular-storage band reduction that ships each
/// trailing matrix: `sum_{i=1}^{n/b-1} (n - i b)^2 / 2`.
///
/// Equals `n (n - b)(2n - b) / (12 b)` when `b` divides `n`.
pub fn comm_triangular_words(n: u64, b: u64) -> f64 {
    if b == 0 {
        return 0.0;
    }
    (1..n.div_ceil(b)).map(|i| 0.5 * ((n - i * b) as f64).powi(2)).sum()
}

/// Words broadcast when only `W`, `Y` and `Z` (or equivalent pieces) travel:
/// `sum_{i=1}^{n/b-1} 3 (n - i b) b`.
pub fn comm_broadcast_words(n: u64, b: u64) -> u64 {
    if b == 0 {
        return 0;
    }
    (1..n.div_ceil(b)).map(|i| 3 * (n - i * b) * b).sum()
}

/// Largest bandwidth `b` with `b < 4p/q`, below which broadcasting panels
/// beats shipping trailing matrices, given compute rate `p` (flop/s) and link
/// bandwidth `q` (bytes/s).
pub fn crossover_bandwidth(p: f64, q: f64) -> u64 {
    if !(p > 0.0 && q > 0.0) {
        return 0;
    }
    ((4.0 * p / q).ceil() as u64).saturating_sub(1)
}
