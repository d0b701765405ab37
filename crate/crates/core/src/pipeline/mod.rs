//! Multi-worker orchestration of the two-stage eigensolver.
//!
//! Workers are threads that own contiguous column blocks and talk only
//! through counted channels. The [`sim`] module replays the same stage
//! graph under a cost model.

pub mod comm;
mod run;
pub mod sim;
pub mod trace;

use std::fmt;
use std::ops::Range;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EvdError, Result};

pub use comm::{comm_broadcast_words, comm_triangular_words, crossover_bandwidth, CommLedger, Endpoint};
pub use run::{run, run_once, RunOutput};
pub use sim::{simulate, CostModel, Efficiency, SimResult};
pub use trace::{idle_fractions, mean_idle_fraction, validate_trace, Stage, TraceEvent, TraceRules, TraceViolation};

/// How stages are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    /// Stages overlap wherever dependencies allow.
    Pipelined,
    /// Every worker finishes a stage before any worker starts the next.
    Sequential,
    /// Reflectors are applied to the tridiagonal eigenvectors after the
    /// solver, in reverse order.
    Conventional,
}

impl Order {
    pub fn name(self) -> &'static str {
        match self {
            Order::Pipelined => "pipelined",
            Order::Sequential => "sequential",
            Order::Conventional => "conventional",
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Order {
    type Err = EvdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pipelined" => Ok(Order::Pipelined),
            "sequential" => Ok(Order::Sequential),
            "conventional" => Ok(Order::Conventional),
            _ => Err(EvdError::InvalidArgument(format!("unknown order '{s}'"))),
        }
    }
}

/// Skew of the eigenvector row split between workers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Skew {
    Fixed(f64),
    /// Run once without skew, derive it from the trace, run again.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub workers: usize,
    pub b: usize,
    pub order: Order,
    pub back_skew: Skew,
    pub seed: u64,
    pub trace_path: Option<PathBuf>,
    pub want_vectors: bool,
    /// Sweeps per group in bulge back transformation.
    pub group: usize,
    /// Column block width inside panel factorizations.
    pub inner_block: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            b: 32,
            order: Order::Pipelined,
            back_skew: Skew::Fixed(0.0),
            seed: 0,
            trace_path: None,
            want_vectors: true,
            group: crate::back::DEFAULT_GROUP,
            inner_block: 8,
        }
    }
}

impl PipelineConfig {
    pub fn new(workers: usize, b: usize, order: Order) -> Self {
        Self { workers, b, order, ..Self::default() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.workers == 0 {
            return Err(EvdError::InvalidArgument("at least one worker is required".into()));
        }
        if self.b == 0 || self.b >= n.max(2) {
            return Err(EvdError::InvalidArgument(format!("bandwidth {} must lie in [1, {})", self.b, n.max(2))));
        }
        if self.workers > n.div_ceil(self.b) {
            return Err(EvdError::InvalidArgument(format!(
                "{} workers exceed the {} column tiles of width {}",
                self.workers,
                n.div_ceil(self.b),
                self.b
            )));
        }
        if let Skew::Fixed(s) = self.back_skew {
            if !(0.0..=crate::back::MAX_SKEW).contains(&s) {
                return Err(EvdError::InvalidArgument(format!("skew {s} outside [0, 0.05]")));
            }
        }
        if self.group == 0 || self.inner_block == 0 {
            return Err(EvdError::InvalidArgument("group and inner block sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Contiguous column ranges covering `0..n`; the first `n % workers`
/// workers get one extra column.
///
/// ```
/// use pipevd::pipeline::partition;
/// assert_eq!(partition(10, 3).unwrap(), vec![0..4, 4..7, 7..10]);
/// ```
pub fn partition(n: usize, workers: usize) -> Result<Vec<Range<usize>>> {
    if workers == 0 || workers > n {
        return Err(EvdError::InvalidArgument(format!("cannot split {n} columns among {workers} workers")));
    }
    let (q, r) = (n / workers, n % workers);
    let mut start = 0;
    Ok((0..workers)
        .map(|i| {
            let len = q + usize::from(i < r);
            let range = start..start + len;
            start += len;
            range
        })
        .collect())
}

/// Like [`partition`], but in whole tiles of `b` columns (the last tile may
/// be short), so that every band-reduction panel lies inside one block.
pub fn partition_aligned(n: usize, workers: usize, b: usize) -> Result<Vec<Range<usize>>> {
    if b == 0 {
        return Err(EvdError::InvalidArgument("tile width must be positive".into()));
    }
    let tiles = partition(n.div_ceil(b), workers)?;
    Ok(tiles.into_iter().map(|t| t.start * b..(t.end * b).min(n)).collect())
}

/// Worker owning column `c`.
pub fn owner_of(blocks: &[Range<usize>], c: usize) -> usize {
    blocks.iter().position(|r| r.contains(&c)).unwrap_or(blocks.len().saturating_sub(1))
}

/// Row split of the eigenvectors for a given skew, falling back to the plain
/// partition when the ramp is infeasible.
pub fn back_plan(n: usize, workers: usize, skew: f64) -> Result<crate::back::BackPlan> {
    match crate::back::make_back_plan(n, workers, n / workers, skew) {
        Ok(p) => Ok(p),
        Err(EvdError::InfeasiblePlan(_)) => {
            let sizes = partition(n, workers)?.into_iter().map(|r| r.len()).collect();
            Ok(crate::back::BackPlan { sizes, base: n / workers })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_examples() {
        assert_eq!(partition(100, 4).unwrap(), vec![0..25, 25..50, 50..75, 75..100]);
        assert_eq!(partition(10, 3).unwrap(), vec![0..4, 4..7, 7..10]);
        assert_eq!(partition(7, 1).unwrap(), vec![0..7]);
        assert!(partition(3, 4).is_err());
    }

    #[test]
    fn aligned_partition_keeps_tiles_whole() {
        assert_eq!(partition_aligned(10, 2, 3).unwrap(), vec![0..6, 6..10]);
        assert_eq!(partition_aligned(64, 4, 8).unwrap(), vec![0..16, 16..32, 32..48, 48..64]);
        assert_eq!(owner_of(&partition_aligned(10, 2, 3).unwrap(), 6), 1);
    }

    #[test]
    fn order_and_skew_parse() {
        assert_eq!("Sequential".parse::<Order>().unwrap(), Order::Sequential);
        assert!("cyclic".parse::<Order>().is_err());
        assert!(PipelineConfig { back_skew: Skew::Fixed(0.1), ..PipelineConfig::default() }.validate(64).is_err());
        assert!(PipelineConfig::new(9, 8, Order::Pipelined).validate(64).is_err());
    }
}
