//! Bulge chasing: symmetric band to tridiagonal by Householder sweeps.
//!
//! Sweep `i` zeroes column `i` below the sub-diagonal and then chases the
//! resulting bulge down the band. Step `j` of sweep `i` works on rows
//! `st = i + 1 + j*b ..= min(st + b - 1, n - 1)`:
//!
//! * step 0 builds a reflector from column `i` and applies it on both sides of
//!   the diagonal block;
//! * step `j > 0` applies the previous reflector from the right to the block
//!   below, builds a new reflector from that block's first column, applies it
//!   from the left to the rest of the block, then on both sides of the next
//!   diagonal block.
//!
//! Task `(i, j)` may run once `(i, j - 1)` and `(i - 1, j + 1)` are done. The
//! workspace keeps `2b` sub-diagonals, enough to hold every bulge.

use std::collections::BTreeMap;

use crate::error::{shape_err, EvdError, Result};
use crate::matrix::{make_reflector, BandMatrix, FlopCounter, TridiagonalMatrix};

/// Number of sweeps for order `n` (the last one may be trivial).
pub fn sweep_count(n: usize) -> usize {
    n.saturating_sub(1)
}

/// Number of chase steps in sweep `i`.
pub fn steps_in_sweep(n: usize, b: usize, i: usize) -> usize {
    if i + 2 > n {
        0
    } else {
        (n - 2 - i) / b + 1
    }
}

/// Rows `(st, ed)` (inclusive) acted on by the reflector of task `(i, j)`.
pub fn task_rows(n: usize, b: usize, i: usize, j: usize) -> (usize, usize) {
    let st = i + 1 + j * b;
    (st, (st + b - 1).min(n - 1))
}

/// Smallest column touched by task `(i, j)`.
pub fn task_min_col(n: usize, b: usize, i: usize, j: usize) -> usize {
    if j == 0 {
        i
    } else {
        task_rows(n, b, i, j - 1).0
    }
}

/// Lower band workspace holding columns `col_start..col_start + ncols`, each
/// with rows `c..=c + 2b`.
#[derive(Clone, Debug)]
struct BandWork {
    n: usize,
    ld: usize,
    col_start: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl BandWork {
    fn new(n: usize, b: usize, col_start: usize, ncols: usize) -> Self {
        let ld = 2 * b + 1;
        Self { n, ld, col_start, ncols, data: vec![0.0; ld * ncols] }
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(r >= c && r - c < self.ld && r < self.n);
        debug_assert!(c >= self.col_start && c < self.col_start + self.ncols, "column {c} outside window");
        (c - self.col_start) * self.ld + (r - c)
    }

    #[inline]
    fn get(&self, r: usize, c: usize) -> f64 {
        self.data[self.idx(r, c)]
    }

    /// Rows `r0..r0 + len` of column `c`.
    #[inline]
    fn col_mut(&mut self, c: usize, r0: usize, len: usize) -> &mut [f64] {
        let s = self.idx(r0, c);
        &mut self.data[s..s + len]
    }

    fn col(&self, c: usize, r0: usize, len: usize) -> &[f64] {
        let s = self.idx(r0, c);
        &self.data[s..s + len]
    }

    fn load_band_columns(&mut self, first_col: usize, b: usize, cols: &[f64]) {
        let bw = b + 1;
        for lj in 0..cols.len() / bw {
            let c = first_col + lj;
            let len = bw.min(self.n - c);
            self.col_mut(c, c, len).copy_from_slice(&cols[lj * bw..lj * bw + len]);
        }
    }

    /// Drops columns before `lo`.
    fn truncate_front(&mut self, lo: usize) {
        let skip = (lo - self.col_start) * self.ld;
        self.data.drain(..skip);
        self.ncols -= lo - self.col_start;
        self.col_start = lo;
    }

    /// Appends zeroed columns so the window ends at `hi`.
    fn extend_to(&mut self, hi: usize) {
        let end = self.col_start + self.ncols;
        if hi > end {
            self.data.resize(self.data.len() + (hi - end) * self.ld, 0.0);
            self.ncols = hi - self.col_start;
        }
    }
}

/// All bulge reflectors of one reduction.
///
/// Slots are laid out by step `j`, then sweep `i`, each padded to a multiple
/// of 8 values, which is the order back transformation walks them.
#[derive(Clone, Debug, PartialEq)]
pub struct BulgeReflectorSet {
    n: usize,
    b: usize,
    stride: usize,
    offsets: Vec<usize>,
    taus: Vec<f64>,
    filled: Vec<bool>,
    data: Vec<f64>,
}

impl BulgeReflectorSet {
    pub fn new(n: usize, b: usize) -> Self {
        let stride = b.div_ceil(8).max(1) * 8;
        let mut offsets = Vec::new();
        let mut slots = 0;
        if b >= 2 && n >= 3 {
            let mut j = 0;
            while j * b + 1 < n {
                offsets.push(slots);
                slots += n - 1 - j * b;
                j += 1;
            }
        }
        Self { n, b, stride, offsets, taus: vec![0.0; slots], filled: vec![false; slots], data: vec![0.0; slots * stride] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> usize {
        self.b
    }

    /// Number of storage slots, one per task.
    pub fn slots(&self) -> usize {
        self.taus.len()
    }

    /// Number of distinct chase steps `j`.
    pub fn step_blocks(&self) -> usize {
        self.offsets.len()
    }

    /// Sweeps that have a step `j`.
    pub fn sweeps_in_block(&self, j: usize) -> usize {
        if j < self.offsets.len() {
            self.n - 1 - j * self.b
        } else {
            0
        }
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        (i < self.sweeps_in_block(j)).then(|| self.offsets[j] + i)
    }

    /// First row and length of reflector `(i, j)`.
    pub fn span(&self, i: usize, j: usize) -> (usize, usize) {
        let (st, ed) = task_rows(self.n, self.b, i, j);
        (st, ed + 1 - st)
    }

    /// `(tau, v)` of reflector `(i, j)`, if recorded.
    pub fn get(&self, i: usize, j: usize) -> Option<(f64, &[f64])> {
        let s = self.slot(i, j)?;
        if !self.filled[s] {
            return None;
        }
        let len = self.span(i, j).1;
        Some((self.taus[s], &self.data[s * self.stride..s * self.stride + len]))
    }

    pub fn set(&mut self, i: usize, j: usize, tau: f64, v: &[f64]) -> Result<()> {
        let s = self.slot(i, j).ok_or_else(|| EvdError::InvalidArgument(format!("no reflector slot ({i}, {j})")))?;
        let len = self.span(i, j).1;
        if v.len() != len || v[0] != 1.0 || !tau.is_finite() {
            return Err(EvdError::InvalidArgument(format!("reflector ({i}, {j}) must have length {len} and v[0] = 1")));
        }
        self.taus[s] = tau;
        self.data[s * self.stride..s * self.stride + len].copy_from_slice(v);
        self.filled[s] = true;
        Ok(())
    }

    /// Number of recorded reflectors that are not the identity.
    pub fn len(&self) -> usize {
        self.taus.iter().zip(&self.filled).filter(|(t, f)| **f && **t != 0.0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn filled_count(&self) -> usize {
        self.filled.iter().filter(|f| **f).count()
    }

    pub fn is_complete(&self) -> bool {
        self.filled.iter().all(|f| *f)
    }

    /// Copies every recorded slot of `other` into `self`.
    pub fn merge(&mut self, other: &BulgeReflectorSet) -> Result<()> {
        if (self.n, self.b) != (other.n, other.b) {
            return shape_err("BulgeReflectorSet::merge", format!("({}, {}) vs ({}, {})", self.n, self.b, other.n, other.b));
        }
        for s in 0..other.slots() {
            if other.filled[s] {
                if self.filled[s] {
                    return Err(EvdError::InvalidArgument(format!("reflector slot {s} recorded twice")));
                }
                self.filled[s] = true;
                self.taus[s] = other.taus[s];
                let r = s * self.stride..(s + 1) * self.stride;
                self.data[r.clone()].copy_from_slice(&other.data[r]);
            }
        }
        Ok(())
    }

    /// Words needed to ship the recorded reflectors (vector entries plus tau).
    pub fn payload_words(&self) -> usize {
        let mut words = 0;
        for j in 0..self.step_blocks() {
            for i in 0..self.sweeps_in_block(j) {
                if self.filled[self.offsets[j] + i] {
                    words += self.span(i, j).1 + 1;
                }
            }
        }
        words
    }

    /// Tasks whose reflectors must be applied before `(i, j)` when building
    /// `Q_b` times a matrix (reverse generation order).
    pub fn conventional_predecessors(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if j > 0 && self.slot(i + 1, j - 1).is_some() {
            out.push((i + 1, j - 1));
        }
        if self.slot(i + 1, j).is_some() {
            out.push((i + 1, j));
        }
        out
    }

    /// Tasks whose reflectors must be applied before `(i, j)` when building
    /// `Q_b^T` times a matrix (generation order).
    pub fn transposed_predecessors(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if i > 0 {
            if self.slot(i - 1, j).is_some() {
                out.push((i - 1, j));
            }
            if self.slot(i - 1, j + 1).is_some() {
                out.push((i - 1, j + 1));
            }
        }
        out
    }

    /// Checks that `order` lists every slot once and respects the dependency
    /// rule for the chosen direction.
    pub fn check_order(&self, order: &[(usize, usize)], transposed: bool) -> Result<()> {
        let mut pos = vec![usize::MAX; self.slots()];
        for (k, &(i, j)) in order.iter().enumerate() {
            let s = self.slot(i, j).ok_or_else(|| EvdError::Cycle(format!("unknown reflector ({i}, {j})")))?;
            if pos[s] != usize::MAX {
                return Err(EvdError::Cycle(format!("reflector ({i}, {j}) scheduled twice")));
            }
            pos[s] = k;
        }
        if pos.contains(&usize::MAX) {
            return Err(EvdError::Cycle("schedule misses reflectors".into()));
        }
        for &(i, j) in order {
            let me = pos[self.slot(i, j).expect("checked")];
            let preds =
                if transposed { self.transposed_predecessors(i, j) } else { self.conventional_predecessors(i, j) };
            for (pi, pj) in preds {
                if pos[self.slot(pi, pj).expect("valid predecessor")] > me {
                    return Err(EvdError::Cycle(format!("({i}, {j}) applied before its predecessor ({pi}, {pj})")));
                }
            }
        }
        Ok(())
    }
}

/// Boundary handoff between consecutive workers.
///
/// Carries every workspace column still needed by unfinished tasks, from
/// `col_lo` up to the boundary `offset`, plus sweep progress and the latest
/// reflector of each sweep in flight.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapBlock {
    /// Boundary column between the sender's and the receiver's blocks.
    pub offset: usize,
    pub col_lo: usize,
    pub values: Vec<f64>,
    /// First sweep with work left.
    pub first_open: usize,
    /// Steps done, for sweeps `first_open..`, up to the last started one.
    pub progress: Vec<usize>,
    /// `(sweep, tau, v)` of the last applied reflector of each sweep in flight.
    pub pending: Vec<(usize, f64, Vec<f64>)>,
}

impl OverlapBlock {
    /// Matrix and reflector values carried.
    pub fn payload_words(&self) -> usize {
        self.values.len() + self.pending.iter().map(|(_, _, v)| v.len() + 1).sum::<usize>()
    }

    /// Bookkeeping entries (indices and progress counters).
    pub fn header_words(&self) -> usize {
        3 + self.progress.len() + self.pending.len()
    }
}

/// A worker's slab of the band matrix: lower band columns
/// `col_start..col_end`, `b + 1` values each.
#[derive(Clone, Debug)]
pub struct BandSlab {
    pub n: usize,
    pub b: usize,
    pub col_start: usize,
    pub col_end: usize,
    pub data: Vec<f64>,
}

impl BandSlab {
    pub fn from_band(band: &BandMatrix, col_start: usize, col_end: usize) -> Self {
        let (n, b) = (band.n(), band.b());
        let bw = b + 1;
        let mut data = vec![0.0; bw * (col_end - col_start)];
        for (lj, c) in (col_start..col_end).enumerate() {
            for d in 0..bw.min(n - c) {
                data[lj * bw + d] = band.get(c + d, c);
            }
        }
        Self { n, b, col_start, col_end, data }
    }
}

/// Diagonal and sub-diagonal entries for columns `col_start..`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialTridiagonal {
    pub col_start: usize,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

/// Stitches consecutive partial outputs into one tridiagonal matrix.
pub fn stitch(parts: &[PartialTridiagonal]) -> Result<TridiagonalMatrix> {
    let mut d = Vec::new();
    let mut e = Vec::new();
    for p in parts {
        if p.col_start != d.len() {
            return shape_err("stitch", format!("part at {} does not continue at {}", p.col_start, d.len()));
        }
        d.extend_from_slice(&p.d);
        e.extend_from_slice(&p.e);
    }
    e.truncate(d.len().saturating_sub(1));
    TridiagonalMatrix::new(d, e)
}

struct Chaser {
    n: usize,
    b: usize,
    work: BandWork,
    progress: Vec<usize>,
    first_open: usize,
    last: BTreeMap<usize, (f64, Vec<f64>)>,
    reflectors: BulgeReflectorSet,
}

impl Chaser {
    fn steps(&self, i: usize) -> usize {
        steps_in_sweep(self.n, self.b, i)
    }

    /// Runs every ready task whose columns all lie below `limit`, sweep by
    /// sweep. The executed set is the largest one closed under dependencies.
    fn run_until(&mut self, limit: usize, counter: &mut FlopCounter) -> Result<()> {
        let nsweeps = sweep_count(self.n);
        let mut i = self.first_open;
        while i < nsweeps {
            let steps = self.steps(i);
            let cap = if i > self.first_open || i > 0 {
                match i.checked_sub(1) {
                    Some(p) if p >= self.first_open => {
                        let (pj, ps) = (self.progress[p], self.steps(p));
                        if pj == ps {
                            usize::MAX
                        } else {
                            pj.saturating_sub(1)
                        }
                    }
                    _ => usize::MAX,
                }
            } else {
                usize::MAX
            };
            let start = self.progress[i];
            while self.progress[i] < steps && self.progress[i] < cap {
                let j = self.progress[i];
                let (_, ed) = task_rows(self.n, self.b, i, j);
                if ed >= limit {
                    break;
                }
                self.run_task(i, j, counter)?;
                self.progress[i] += 1;
            }
            if self.progress[i] == steps {
                self.last.remove(&i);
            }
            if self.progress[i] == 0 && start == 0 {
                break;
            }
            i += 1;
        }
        while self.first_open < nsweeps && self.progress[self.first_open] == self.steps(self.first_open) {
            self.first_open += 1;
        }
        Ok(())
    }

    /// Smallest column touched by any remaining task.
    fn pending_col(&self) -> usize {
        let nsweeps = sweep_count(self.n);
        let mut lo = self.n;
        for i in self.first_open..nsweeps {
            let j = self.progress[i];
            if j < self.steps(i) {
                lo = lo.min(task_min_col(self.n, self.b, i, j));
            }
            if j == 0 {
                break;
            }
        }
        lo
    }

    fn run_task(&mut self, i: usize, j: usize, counter: &mut FlopCounter) -> Result<()> {
        let (n, b) = (self.n, self.b);
        let (st, ed) = task_rows(n, b, i, j);
        let len = ed + 1 - st;
        let mut v;
        let tau;
        if j == 0 {
            v = self.work.col(i, st, len).to_vec();
            let (t, _) = make_reflector(&mut v);
            tau = t;
            self.work.col_mut(i, st, len).copy_from_slice(&v);
            self.work.col_mut(i, st, len)[1..].fill(0.0);
        } else {
            let (pst, ped) = task_rows(n, b, i, j - 1);
            let plen = ped + 1 - pst;
            let (ptau, pv) = self
                .last
                .get(&i)
                .cloned()
                .ok_or_else(|| EvdError::Protocol { worker: 0, stage: "BC", detail: format!("missing reflector ({i}, {})", j - 1) })?;
            debug_assert_eq!(pv.len(), plen);
            // Right-apply the previous reflector to D = rows st..=ed, cols pst..=ped.
            if ptau != 0.0 {
                let mut t = vec![0.0; len];
                for (c, &vc) in pv.iter().enumerate() {
                    let col = self.work.col(pst + c, st, len);
                    for (tr, x) in t.iter_mut().zip(col) {
                        *tr += x * vc;
                    }
                }
                for (c, &vc) in pv.iter().enumerate() {
                    let f = ptau * vc;
                    let col = self.work.col_mut(pst + c, st, len);
                    for (x, tr) in col.iter_mut().zip(&t) {
                        *x -= f * tr;
                    }
                }
                counter.add((2 * len * plen) as u64);
            }
            v = self.work.col(pst, st, len).to_vec();
            let (t, _) = make_reflector(&mut v);
            tau = t;
            {
                let col = self.work.col_mut(pst, st, len);
                col.copy_from_slice(&v);
                col[1..].fill(0.0);
            }
            v[0] = 1.0;
            if tau != 0.0 {
                for c in 1..plen {
                    let col = self.work.col_mut(pst + c, st, len);
                    let s = tau * col.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
                    for (x, vr) in col.iter_mut().zip(&v) {
                        *x -= s * vr;
                    }
                }
                counter.add((2 * len * (plen - 1)) as u64);
            }
        }
        v[0] = 1.0;
        if tau != 0.0 {
            self.two_sided(st, &v, tau, counter);
        }
        self.reflectors.set(i, j, tau, &v)?;
        self.last.insert(i, (tau, v));
        Ok(())
    }

    /// `A <- H A H` on the symmetric diagonal block starting at `st`.
    fn two_sided(&mut self, st: usize, v: &[f64], tau: f64, counter: &mut FlopCounter) {
        let len = v.len();
        let mut y = vec![0.0; len];
        for c in 0..len {
            let col = self.work.col(st + c, st + c, len - c);
            y[c] += col[0] * v[c];
            for r in 1..col.len() {
                y[c + r] += col[r] * v[c];
                y[c] += col[r] * v[c + r];
            }
        }
        y.iter_mut().for_each(|x| *x *= tau);
        let alpha = -0.5 * tau * y.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        for (yr, vr) in y.iter_mut().zip(v) {
            *yr += alpha * vr;
        }
        for c in 0..len {
            let (vc, yc) = (v[c], y[c]);
            let col = self.work.col_mut(st + c, st + c, len - c);
            for r in 0..col.len() {
                col[r] -= v[c + r] * yc + y[c + r] * vc;
            }
        }
        counter.add((2 * len * len + 2 * len) as u64);
    }

    fn extract(&self, from: usize, to: usize) -> PartialTridiagonal {
        let d = (from..to).map(|c| self.work.get(c, c)).collect();
        let e = (from..to).filter(|&c| c + 1 < self.n).map(|c| self.work.get(c + 1, c)).collect();
        PartialTridiagonal { col_start: from, d, e }
    }
}

/// Sequential reduction of a band matrix to tridiagonal form.
pub fn bc_reduce(band: &BandMatrix, counter: &mut FlopCounter) -> Result<(TridiagonalMatrix, BulgeReflectorSet)> {
    let slab = BandSlab::from_band(band, 0, band.n());
    let (part, set, out) = bc_reduce_partition(&slab, None, true, counter)?;
    debug_assert!(out.is_none());
    Ok((stitch(&[part])?, set))
}

/// One worker's share of distributed bulge chasing.
///
/// Runs every task that touches only columns before the end of this slab
/// (and is not blocked by an unfinished one), then hands the columns still in
/// use to the successor. The stitched result is bit-identical to
/// [`bc_reduce`] because conflicting tasks run in the same relative order.
pub fn bc_reduce_partition(
    local: &BandSlab,
    incoming: Option<OverlapBlock>,
    is_last: bool,
    counter: &mut FlopCounter,
) -> Result<(PartialTridiagonal, BulgeReflectorSet, Option<OverlapBlock>)> {
    let (n, b) = (local.n, local.b);
    if local.col_start >= local.col_end || local.col_end > n || local.data.len() != (b + 1) * (local.col_end - local.col_start) {
        return shape_err("bc_reduce_partition", format!("slab [{}, {}) of order {n}", local.col_start, local.col_end));
    }
    if is_last != (local.col_end == n) {
        return Err(EvdError::InvalidArgument("only the slab ending at column n can be last".into()));
    }
    let nsweeps = sweep_count(n);
    let mut chaser = match incoming {
        None => {
            if local.col_start != 0 {
                return Err(EvdError::Protocol {
                    worker: 0,
                    stage: "BC",
                    detail: format!("slab at column {} expected an overlap block", local.col_start),
                });
            }
            Chaser {
                n,
                b,
                work: BandWork::new(n, b, 0, 0),
                progress: vec![0; nsweeps],
                first_open: 0,
                last: BTreeMap::new(),
                reflectors: BulgeReflectorSet::new(n, b),
            }
        }
        Some(ov) => {
            if ov.offset != local.col_start || ov.col_lo > ov.offset {
                return Err(EvdError::Protocol {
                    worker: 0,
                    stage: "BC",
                    detail: format!("overlap block at column {} does not meet slab start {}", ov.offset, local.col_start),
                });
            }
            let mut work = BandWork::new(n, b, ov.col_lo, ov.offset - ov.col_lo);
            if ov.values.len() != work.data.len() {
                return shape_err("bc_reduce_partition", "overlap payload size mismatch");
            }
            work.data.copy_from_slice(&ov.values);
            let mut progress = vec![0; nsweeps];
            progress[ov.first_open..ov.first_open + ov.progress.len()].copy_from_slice(&ov.progress);
            // Sweeps before first_open are complete.
            for (i, p) in progress.iter_mut().enumerate().take(ov.first_open) {
                *p = steps_in_sweep(n, b, i);
            }
            let last = ov.pending.into_iter().map(|(i, t, v)| (i, (t, v))).collect();
            Chaser { n, b, work, progress, first_open: ov.first_open, last, reflectors: BulgeReflectorSet::new(n, b) }
        }
    };
    let from = chaser.work.col_start;
    chaser.work.extend_to(local.col_end);
    chaser.work.load_band_columns(local.col_start, b, &local.data);
    if b >= 2 {
        chaser.run_until(local.col_end, counter)?;
    } else {
        chaser.first_open = nsweeps;
    }
    if is_last {
        let part = chaser.extract(from, n);
        return Ok((part, chaser.reflectors, None));
    }
    let lo = if b >= 2 { chaser.pending_col().min(local.col_end) } else { local.col_end };
    let part = chaser.extract(from, lo);
    chaser.work.truncate_front(lo);
    let mut progress = Vec::new();
    for i in chaser.first_open..nsweeps {
        progress.push(chaser.progress[i]);
        if chaser.progress[i] == 0 {
            break;
        }
    }
    let out = OverlapBlock {
        offset: local.col_end,
        col_lo: lo,
        values: std::mem::take(&mut chaser.work.data),
        first_open: chaser.first_open,
        progress,
        pending: chaser.last.iter().map(|(&i, (t, v))| (i, *t, v.clone())).collect(),
    };
    Ok((part, chaser.reflectors, Some(out)))
}
