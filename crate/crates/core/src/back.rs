//! Back transformation: turning tridiagonal eigenvectors into eigenvectors
//! of the original matrix.
//!
//! With `Q_s` from band reduction and `Q_b` from bulge chasing, the
//! eigenvectors are `Q = Q_s Q_b Q_d`. The reordered path builds
//! `Q_sb^T = Q_b^T Q_s^T` on identity columns while the tridiagonal solver
//! runs, then finishes with one multiply by `Q_d`. The conventional path
//! applies `Q_b` and then `Q_s` to `Q_d` directly.

use std::ops::Range;

use crate::bulge::{sweep_count, BulgeReflectorSet};
use crate::error::{shape_err, EvdError, Result};
use crate::matrix::{apply_block_reflector_inplace, dot, FlopCounter, MatRef, Matrix, Op, ReflectorPanel, Side};
use crate::sbr::SbrFactors;

/// Largest relative deviation of a block size from the base size.
pub const MAX_SKEW: f64 = 0.05;

/// Default number of consecutive sweeps applied together.
pub const DEFAULT_GROUP: usize = 4;

/// Per-worker share of the eigenvector rows, largest first.
#[derive(Clone, Debug, PartialEq)]
pub struct BackPlan {
    pub sizes: Vec<usize>,
    pub base: usize,
}

impl BackPlan {
    pub fn ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.sizes
            .iter()
            .map(|&s| {
                let r = start..start + s;
                start += s;
                r
            })
            .collect()
    }

    /// Checks ordering, coverage and the 5% band around `base`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.sizes.iter().sum::<usize>() != n {
            return Err(EvdError::InfeasiblePlan(format!("sizes {:?} do not sum to {n}", self.sizes)));
        }
        if self.sizes.windows(2).any(|w| w[0] < w[1]) {
            return Err(EvdError::InfeasiblePlan(format!("sizes {:?} are not descending", self.sizes)));
        }
        if self.sizes.len() > 1 {
            let limit = MAX_SKEW * self.base as f64;
            if let Some(&s) = self.sizes.iter().find(|&&s| (s as f64 - self.base as f64).abs() > limit) {
                return Err(EvdError::InfeasiblePlan(format!("size {s} is more than 5% away from base {}", self.base)));
            }
        }
        Ok(())
    }
}

/// Linear ramp `b_i = round(base * (1 + skew * (1 - 2i/(w-1))))`, repaired to
/// sum to `n` by adding to the first entries or taking from the last ones.
///
/// ```
/// use pipevd::back::make_back_plan;
/// let plan = make_back_plan(8192, 4, 2048, 0.05).unwrap();
/// assert_eq!(plan.sizes, vec![2150, 2082, 2014, 1946]);
/// ```
pub fn make_back_plan(n: usize, workers: usize, base: usize, skew: f64) -> Result<BackPlan> {
    if workers == 0 {
        return Err(EvdError::InvalidArgument("at least one worker is required".into()));
    }
    if !(0.0..=MAX_SKEW).contains(&skew) {
        return Err(EvdError::InvalidArgument(format!("skew {skew} outside [0, {MAX_SKEW}]")));
    }
    if workers == 1 {
        return Ok(BackPlan { sizes: vec![n], base: n });
    }
    let w = workers as f64;
    let lo = (base as f64 * (1.0 - MAX_SKEW)).ceil() as i64;
    let hi = (base as f64 * (1.0 + MAX_SKEW)).floor() as i64;
    let mut sizes: Vec<i64> = (0..workers)
        .map(|i| {
            let ramp = 1.0 + skew * (1.0 - 2.0 * i as f64 / (w - 1.0));
            ((base as f64 * ramp).round() as i64).clamp(lo, hi)
        })
        .collect();
    let mut gap = n as i64 - sizes.iter().sum::<i64>();
    let mut guard = 0;
    while gap != 0 && guard < 4 * n {
        if gap > 0 {
            for s in sizes.iter_mut() {
                if gap == 0 {
                    break;
                }
                *s += 1;
                gap -= 1;
            }
        } else {
            for s in sizes.iter_mut().rev() {
                if gap == 0 {
                    break;
                }
                if *s > 0 {
                    *s -= 1;
                    gap += 1;
                }
            }
        }
        guard += 1;
    }
    let plan = BackPlan { sizes: sizes.into_iter().map(|s| s.max(0) as usize).collect(), base };
    plan.validate(n)?;
    Ok(plan)
}

fn check_factors(f: &SbrFactors) -> Result<()> {
    if !f.is_complete() {
        return Err(EvdError::InvalidArgument(format!(
            "band reduction factors are incomplete ({} panels for n = {}, b = {})",
            f.panels.len(),
            f.n,
            f.b
        )));
    }
    Ok(())
}

fn apply_panel_rows(
    m: &mut Matrix,
    p: &ReflectorPanel,
    cols: Range<usize>,
    transpose: bool,
    counter: &mut FlopCounter,
) -> Result<()> {
    if cols.is_empty() {
        return Ok(());
    }
    let mut rows = m.sub_mut(p.row_offset, cols.start, p.rows(), cols.len());
    apply_block_reflector_inplace(&mut rows, p.w.view(), p.y.view(), Side::Left, transpose, counter)
}

/// Columns `cols` of `Q_s = P_0 P_1 ... P_{R-1}`, applied to identity columns
/// starting from the last panel.
pub fn sbr_back_accumulate(factors: &SbrFactors, cols: Range<usize>, counter: &mut FlopCounter) -> Result<Matrix> {
    check_factors(factors)?;
    let n = factors.n;
    if cols.end > n || cols.start > cols.end {
        return shape_err("sbr_back_accumulate", format!("columns {cols:?} of {n}"));
    }
    let width = cols.len();
    let mut q = Matrix::from_fn(n, width, |i, j| if i == cols.start + j { 1.0 } else { 0.0 });
    for p in factors.panels.iter().rev() {
        // Identity columns left of the panel rows are untouched so far.
        let first = p.row_offset.max(cols.start).min(cols.end) - cols.start;
        apply_panel_rows(&mut q, p, first..width, false, counter)?;
    }
    Ok(q)
}

/// `M <- Q_s M` for the panels `P_0, P_1, ...` given in ascending order.
pub fn apply_sbr_q<'a, I>(panels: I, m: &mut Matrix, counter: &mut FlopCounter) -> Result<()>
where
    I: DoubleEndedIterator<Item = &'a ReflectorPanel>,
{
    let width = m.cols();
    for p in panels.rev() {
        if p.row_offset + p.rows() > m.rows() {
            return shape_err("apply_sbr_q", format!("panel rows end at {} of {}", p.row_offset + p.rows(), m.rows()));
        }
        apply_panel_rows(m, p, 0..width, false, counter)?;
    }
    Ok(())
}

/// Builds columns of `Q_s^T` one panel at a time, in ascending panel order.
#[derive(Clone, Debug)]
pub struct SbrBackTransposed {
    pub q: Matrix,
    pub rows: Range<usize>,
    next: usize,
}

impl SbrBackTransposed {
    /// Starts from the identity columns `rows` (these become rows of `Q_s`).
    pub fn new(n: usize, rows: Range<usize>) -> Self {
        let q = Matrix::from_fn(n, rows.len(), |i, j| if i == rows.start + j { 1.0 } else { 0.0 });
        Self { q, rows, next: 0 }
    }

    pub fn panels_applied(&self) -> usize {
        self.next
    }

    /// Applies `P_x^T`; panels must arrive in ascending order.
    pub fn apply(&mut self, x: usize, p: &ReflectorPanel, counter: &mut FlopCounter) -> Result<()> {
        if x != self.next {
            return Err(EvdError::InvalidArgument(format!("panel {x} applied out of order (expected {})", self.next)));
        }
        let width = self.q.cols();
        apply_panel_rows(&mut self.q, p, 0..width, true, counter)?;
        self.next += 1;
        Ok(())
    }
}

/// `Q_s^T[:, rows]`, i.e. the transpose of rows `rows` of `Q_s`.
pub fn sbr_back_transposed(factors: &SbrFactors, rows: Range<usize>, counter: &mut FlopCounter) -> Result<Matrix> {
    check_factors(factors)?;
    let mut acc = SbrBackTransposed::new(factors.n, rows);
    for (x, p) in factors.panels.iter().enumerate() {
        acc.apply(x, p, counter)?;
    }
    Ok(acc.q)
}

/// Which product bulge reflectors build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `Q_b^T M`: reflectors in generation order.
    Transposed,
    /// `Q_b M`: reflectors in reverse generation order.
    Conventional,
}

/// `g` consecutive sweeps of one chase step, applied together.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupTile {
    pub group: usize,
    pub step: usize,
    pub sweeps: Vec<usize>,
    pub row_start: usize,
    pub height: usize,
}

/// Tiles in application order.
///
/// Sweeps are grouped `g` at a time. Conventionally, groups run from the
/// last sweeps to the first, steps within a group run from the top of the
/// matrix down, and sweeps within a tile run backwards. The transposed
/// direction is the exact reverse.
pub fn group_tiles(u: &BulgeReflectorSet, g: usize, dir: Direction) -> Vec<GroupTile> {
    let g = g.clamp(1, u.b() + 1);
    let nsweeps = if u.slots() == 0 { 0 } else { sweep_count(u.n()) };
    let ngroups = nsweeps.div_ceil(g);
    let mut tiles = Vec::new();
    for k in (0..ngroups).rev() {
        let first = k * g;
        let last = ((k + 1) * g).min(nsweeps);
        for j in 0..u.step_blocks() {
            let sweeps: Vec<usize> = (first..last).rev().filter(|&i| i < u.sweeps_in_block(j)).collect();
            if sweeps.is_empty() {
                continue;
            }
            let (row_start, _) = u.span(*sweeps.last().expect("non-empty"), j);
            let (s_hi, l_hi) = u.span(sweeps[0], j);
            tiles.push(GroupTile { group: k, step: j, sweeps, row_start, height: s_hi + l_hi - row_start });
        }
    }
    if dir == Direction::Transposed {
        tiles.reverse();
        for t in &mut tiles {
            t.sweeps.reverse();
        }
    }
    tiles
}

/// Flattened `(sweep, step)` order of [`group_tiles`].
pub fn group_order(u: &BulgeReflectorSet, g: usize, dir: Direction) -> Vec<(usize, usize)> {
    group_tiles(u, g, dir).into_iter().flat_map(|t| t.sweeps.into_iter().map(move |i| (i, t.step))).collect()
}

/// Plain generation order (or its reverse), one reflector at a time.
pub fn sequential_order(u: &BulgeReflectorSet, dir: Direction) -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(u.slots());
    if u.slots() > 0 {
        for i in 0..sweep_count(u.n()) {
            for j in 0..u.step_blocks() {
                if i < u.sweeps_in_block(j) {
                    order.push((i, j));
                }
            }
        }
    }
    if dir == Direction::Conventional {
        order.reverse();
    }
    order
}

#[inline]
fn reflect(seg: &mut [f64], tau: f64, v: &[f64]) {
    let s = tau * dot(seg, v);
    for (x, vi) in seg.iter_mut().zip(v) {
        *x -= s * vi;
    }
}

/// Applies every bulge reflector to the columns of `m` as rank-1 updates,
/// grouped `g` sweeps at a time (BLAS2 style, about `m * n^2` multiply-adds).
///
/// Each column sees the reflectors in a dependency-respecting order, so the
/// result is bit-identical to one-at-a-time application.
pub fn bc_back_apply(
    u: &BulgeReflectorSet,
    m: &mut Matrix,
    g: usize,
    dir: Direction,
    counter: &mut FlopCounter,
) -> Result<()> {
    if m.rows() != u.n() {
        return shape_err("bc_back_apply", format!("{} rows for order {}", m.rows(), u.n()));
    }
    if !u.is_complete() {
        return Err(EvdError::InvalidArgument("bulge reflector set is incomplete".into()));
    }
    let tiles = group_tiles(u, g, dir);
    if cfg!(debug_assertions) {
        let order: Vec<_> = tiles.iter().flat_map(|t| t.sweeps.iter().map(move |&i| (i, t.step))).collect();
        u.check_order(&order, dir == Direction::Transposed)?;
    }
    // A group of tiles (same sweep group) is applied to one column at a time.
    let mut start = 0;
    while start < tiles.len() {
        let mut end = start + 1;
        while end < tiles.len() && tiles[end].group == tiles[start].group {
            end += 1;
        }
        let refl: Vec<(usize, f64, &[f64])> = tiles[start..end]
            .iter()
            .flat_map(|t| t.sweeps.iter().map(move |&i| (i, t.step)))
            .filter_map(|(i, j)| {
                let (tau, v) = u.get(i, j).expect("complete set");
                (tau != 0.0).then(|| (u.span(i, j).0, tau, v))
            })
            .collect();
        let per_col: usize = refl.iter().map(|(_, _, v)| 2 * v.len()).sum();
        for c in 0..m.cols() {
            let col = m.col_mut(c);
            for &(st, tau, v) in &refl {
                reflect(&mut col[st..st + v.len()], tau, v);
            }
        }
        counter.add((per_col * m.cols()) as u64);
        start = end;
    }
    Ok(())
}

/// Reference: reflectors one at a time over the whole matrix, in plain
/// generation order (or reverse).
pub fn bc_back_apply_sequential(
    u: &BulgeReflectorSet,
    m: &mut Matrix,
    dir: Direction,
    counter: &mut FlopCounter,
) -> Result<()> {
    if m.rows() != u.n() {
        return shape_err("bc_back_apply_sequential", format!("{} rows for order {}", m.rows(), u.n()));
    }
    for (i, j) in sequential_order(u, dir) {
        let (tau, v) = u.get(i, j).ok_or_else(|| EvdError::InvalidArgument(format!("missing reflector ({i}, {j})")))?;
        if tau == 0.0 {
            continue;
        }
        let st = u.span(i, j).0;
        for c in 0..m.cols() {
            reflect(&mut m.col_mut(c)[st..st + v.len()], tau, v);
        }
        counter.add((2 * v.len() * m.cols()) as u64);
    }
    Ok(())
}

/// Multiply-adds of the compact-WY (BLAS3) variant of bulge back
/// transformation for `m` output columns, kept as an analytic reference.
pub const fn compact_wy_multiply_adds(m: u64, n: u64) -> u64 {
    4 * m * n * n
}

/// Rows of `Q = Q_sb Q_d`, given those rows of `Q_sb` (`r x n`).
pub fn final_gemm(q_sb_rows: &Matrix, q_d: &Matrix, counter: &mut FlopCounter) -> Result<Matrix> {
    crate::matrix::matmul_counted(q_sb_rows, q_d, counter)
}

/// Rows of `Q = Q_sb Q_d`, given the matching columns of `Q_sb^T` (`n x r`).
pub fn final_gemm_transposed(q_sb_t_cols: MatRef<'_>, q_d: &Matrix, counter: &mut FlopCounter) -> Result<Matrix> {
    crate::matrix::matmul_op(q_sb_t_cols, Op::T, q_d.view(), Op::N, counter)
}

/// Reordered back transformation for a single worker: `Q = (Q_b^T Q_s^T)^T Q_d`.
pub fn reordered_back_transform(
    factors: &SbrFactors,
    u: &BulgeReflectorSet,
    q_d: &Matrix,
    g: usize,
    counter: &mut FlopCounter,
) -> Result<Matrix> {
    let n = factors.n;
    let mut qt = sbr_back_transposed(factors, 0..n, counter)?;
    bc_back_apply(u, &mut qt, g, Direction::Transposed, counter)?;
    final_gemm_transposed(qt.view(), q_d, counter)
}

/// Conventional back transformation of the columns `cols` of `Q_d`:
/// `Q[:, cols] = Q_s Q_b Q_d[:, cols]`.
pub fn conventional_back_transform(
    factors: &SbrFactors,
    u: &BulgeReflectorSet,
    q_d: &Matrix,
    cols: Range<usize>,
    g: usize,
    counter: &mut FlopCounter,
) -> Result<Matrix> {
    check_factors(factors)?;
    let n = factors.n;
    if q_d.rows() != n || cols.end > q_d.cols() {
        return shape_err("conventional_back_transform", format!("Q_d {}x{}", q_d.rows(), q_d.cols()));
    }
    let mut m = q_d.sub(0, cols.start, n, cols.len()).to_owned();
    bc_back_apply(u, &mut m, g, Direction::Conventional, counter)?;
    apply_sbr_q(factors.panels.iter(), &mut m, counter)?;
    Ok(m)
}
