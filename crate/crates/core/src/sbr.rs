//! Successive band reduction: dense symmetric to band form by blocked
//! Householder panels and two-sided `A2 - Y Z^T - Z Y^T` trailing updates.
//!
//! Work is expressed per column slab ([`SbrWorker`]) so the same code runs
//! sequentially (one slab covering every column) and distributed (one slab per
//! worker, exchanging only `W`, `Y` and rows of `A W`). Every trailing entry is
//! updated by the same scalar formula, so results do not depend on how the
//! columns are split.

use crate::error::{shape_err, EvdError, Result};
use crate::matrix::{
    apply_block_reflector_inplace, apply_reflector_left, build_wy, dot, gemm, make_reflector, rank2k_update_block,
    sym_rank2k_update, BandMatrix, ColumnBlock, FlopCounter, MatMut, MatRef, Matrix, ReflectorPanel, Side,
    SymmetricMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SbrConfig {
    /// Target semi-bandwidth.
    pub b: usize,
    /// Columns per panel; always equal to `b`.
    pub panel_width: usize,
    /// Width of the inner blocks inside one panel factorization.
    pub inner_block: usize,
}

impl Default for SbrConfig {
    fn default() -> Self {
        Self::new(32)
    }
}

impl SbrConfig {
    pub fn new(b: usize) -> Self {
        Self { b, panel_width: b, inner_block: 8 }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.b == 0 || self.b >= n {
            return Err(EvdError::InvalidArgument(format!("bandwidth {} must satisfy 1 <= b < n = {n}", self.b)));
        }
        if self.panel_width != self.b {
            return Err(EvdError::InvalidArgument("panel width must equal the bandwidth".into()));
        }
        if self.inner_block == 0 {
            return Err(EvdError::InvalidArgument("inner block width must be positive".into()));
        }
        Ok(())
    }
}

/// Position of panel round `x`: the panel covers columns `c0..c0 + b` and
/// rows `r0..n`, and yields `k` reflectors of length up to `m = n - r0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Round {
    pub index: usize,
    pub c0: usize,
    pub r0: usize,
    pub m: usize,
    pub k: usize,
}

/// Number of panel rounds for an `n x n` matrix reduced to bandwidth `b`.
pub fn round_count(n: usize, b: usize) -> usize {
    if b == 0 || n <= b {
        0
    } else {
        (n - b).div_ceil(b)
    }
}

pub fn round(n: usize, b: usize, x: usize) -> Round {
    let c0 = x * b;
    let r0 = c0 + b;
    let m = n - r0;
    Round { index: x, c0, r0, m, k: m.min(b) }
}

/// All panel reflectors of one reduction, in round order.
#[derive(Clone, Debug)]
pub struct SbrFactors {
    pub n: usize,
    pub b: usize,
    pub panels: Vec<ReflectorPanel>,
}

impl SbrFactors {
    pub fn new(n: usize, b: usize) -> Self {
        Self { n, b, panels: Vec::new() }
    }

    pub fn col_offsets(&self) -> Vec<usize> {
        self.panels.iter().map(|p| p.col_offset).collect()
    }

    /// True when panels for every round are present and in order.
    pub fn is_complete(&self) -> bool {
        let rounds = round_count(self.n, self.b);
        self.panels.len() == rounds
            && self.panels.iter().enumerate().all(|(x, p)| {
                let r = round(self.n, self.b, x);
                p.col_offset == r.c0 && p.row_offset == r.r0 && p.width() == r.k
            })
            && self.panels.iter().map(|p| p.width()).sum::<usize>() == self.n.saturating_sub(self.b)
    }
}

/// Householder QR of a tall panel in place, blocked by `inner_block` columns.
///
/// On return the panel holds `R` (zeros below its diagonal) and the reflector
/// has `col_offset = row_offset = 0`; callers set the global position.
pub fn panel_qr(panel: &mut MatMut<'_>, inner_block: usize, counter: &mut FlopCounter) -> Result<ReflectorPanel> {
    let (m, ncols) = (panel.rows(), panel.cols());
    let kmax = m.min(ncols);
    let ib = inner_block.max(1);
    let mut taus = vec![0.0; kmax];
    let mut kb = 0;
    while kb < kmax {
        let kw = ib.min(kmax - kb);
        for p in kb..kb + kw {
            let (tau, _) = make_reflector(&mut panel.col_mut(p)[p..]);
            taus[p] = tau;
            if tau != 0.0 && p + 1 < kb + kw {
                let mut v = panel.col(p)[p..].to_vec();
                v[0] = 1.0;
                let mut rest = panel.sub_mut(p, p + 1, m - p, kb + kw - p - 1);
                apply_reflector_left(&mut rest, &v, tau, counter);
            }
        }
        if kb + kw < ncols {
            let y = unit_lower(panel.rb().sub(kb, kb, m - kb, kw));
            let w = build_wy(y.view(), &taus[kb..kb + kw], counter)?;
            let mut rest = panel.sub_mut(kb, kb + kw, m - kb, ncols - kb - kw);
            apply_block_reflector_inplace(&mut rest, w.view(), y.view(), Side::Left, true, counter)?;
        }
        kb += kw;
    }
    let y = unit_lower(panel.rb().sub(0, 0, m, kmax));
    for p in 0..kmax {
        panel.col_mut(p)[p + 1..].fill(0.0);
    }
    let w = build_wy(y.view(), &taus, counter)?;
    Ok(ReflectorPanel { w, y, z: None, taus, col_offset: 0, row_offset: 0 })
}

/// Copies the strictly lower part of `a` and puts ones on its diagonal.
fn unit_lower(a: MatRef<'_>) -> Matrix {
    Matrix::from_fn(a.rows(), a.cols(), |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => 0.0,
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => a.get(i, j),
    })
}

/// `Z = A W - 1/2 Y (W^T A W)` given `A W`.
pub fn form_z_from_aw(aw: MatRef<'_>, w: MatRef<'_>, y: MatRef<'_>, counter: &mut FlopCounter) -> Result<Matrix> {
    let (m, k) = (w.rows(), w.cols());
    if aw.rows() != m || aw.cols() != k || y.rows() != m || y.cols() != k {
        return shape_err("form_z", format!("AW {}x{}, W {m}x{k}, Y {}x{}", aw.rows(), aw.cols(), y.rows(), y.cols()));
    }
    let mut wtaw = Matrix::zeros(k, k);
    gemm(0.0, &mut wtaw.view_mut(), 1.0, w, crate::matrix::Op::T, aw, crate::matrix::Op::N, counter)?;
    let mut z = aw.to_owned();
    gemm(1.0, &mut z.view_mut(), -0.5, y, crate::matrix::Op::N, wtaw.view(), crate::matrix::Op::N, counter)?;
    Ok(z)
}

/// `Z = A W - 1/2 Y (W^T A W)` for a square trailing block held in full.
///
/// `A W` is computed once, as dot products down the columns of `A`; by
/// symmetry these are the rows of `A W`.
pub fn form_z(a: MatRef<'_>, w: MatRef<'_>, y: MatRef<'_>, counter: &mut FlopCounter) -> Result<Matrix> {
    let m = a.rows();
    if a.cols() != m || w.rows() != m {
        return shape_err("form_z", format!("A {}x{}, W {}x{}", m, a.cols(), w.rows(), w.cols()));
    }
    let aw = aw_rows(a, w, counter);
    form_z_from_aw(aw.view(), w, y, counter)
}

/// Rows of `A W` for the columns present in `cols` (an `m x t` slab of the
/// symmetric trailing matrix).
fn aw_rows(cols: MatRef<'_>, w: MatRef<'_>, counter: &mut FlopCounter) -> Matrix {
    let (t, k) = (cols.cols(), w.cols());
    let mut out = Matrix::zeros(t, k);
    for p in 0..k {
        let wp = w.col(p);
        let op = out.col_mut(p);
        for (j, o) in op.iter_mut().enumerate() {
            *o = dot(cols.col(j), wp);
        }
    }
    counter.add((t * cols.rows() * k) as u64);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateMode {
    /// Both triangles computed independently: `2 m^2 k` multiply-adds.
    Full,
    /// One triangle computed and mirrored: `m (m + 1) k` multiply-adds.
    Symmetric,
}

/// `A2 <- A2 - Y Z^T - Z Y^T` on a full square block.
pub fn trailing_update(
    a2: &mut MatMut<'_>,
    y: MatRef<'_>,
    z: MatRef<'_>,
    mode: UpdateMode,
    counter: &mut FlopCounter,
) -> Result<()> {
    match mode {
        UpdateMode::Full => {
            if a2.rows() != a2.cols() {
                return shape_err("trailing_update", format!("A2 {}x{} is not square", a2.rows(), a2.cols()));
            }
            rank2k_update_block(a2, y, z, y, z, counter)
        }
        UpdateMode::Symmetric => sym_rank2k_update(a2, y, z, counter),
    }
}

/// One worker's share of the reduction: a full-height column slab.
#[derive(Clone, Debug)]
pub struct SbrWorker {
    pub block: ColumnBlock,
    pub n: usize,
    pub b: usize,
    /// The last worker owns a square trailing block and updates it
    /// symmetrically.
    pub is_last: bool,
}

impl SbrWorker {
    pub fn new(block: ColumnBlock, b: usize, is_last: bool) -> Self {
        let n = block.data.rows();
        Self { block, n, b, is_last }
    }

    pub fn owns_panel(&self, r: &Round) -> bool {
        self.block.col_start <= r.c0 && r.c0 + self.b <= self.block.col_end
    }

    /// Own columns inside the trailing matrix of round `r`, as a global range.
    pub fn trailing_cols(&self, r: &Round) -> std::ops::Range<usize> {
        let lo = self.block.col_start.max(r.r0);
        let hi = self.block.col_end;
        lo..hi.max(lo)
    }

    /// Factors the panel of round `r`, which must lie in this slab.
    pub fn factor_panel(&mut self, r: &Round, inner_block: usize, counter: &mut FlopCounter) -> Result<ReflectorPanel> {
        if !self.owns_panel(r) {
            return Err(EvdError::InvalidArgument(format!(
                "panel at column {} is outside slab [{}, {})",
                r.c0, self.block.col_start, self.block.col_end
            )));
        }
        let local = r.c0 - self.block.col_start;
        let mut panel = self.block.data.sub_mut(r.r0, local, r.m, self.b);
        let mut p = panel_qr(&mut panel, inner_block, counter)?;
        p.col_offset = r.c0;
        p.row_offset = r.r0;
        Ok(p)
    }

    /// This slab's rows of `A2 W`, where `A2` is the trailing matrix of `r`.
    pub fn aw_piece(&self, r: &Round, w: MatRef<'_>, counter: &mut FlopCounter) -> Matrix {
        let cols = self.trailing_cols(r);
        let local = cols.start - self.block.col_start;
        let slab = self.block.data.sub(r.r0, local, r.m, cols.len());
        aw_rows(slab, w, counter)
    }

    /// Applies the two-sided update of round `r` to this slab's trailing
    /// columns.
    pub fn apply_update(
        &mut self,
        r: &Round,
        y: MatRef<'_>,
        z: MatRef<'_>,
        counter: &mut FlopCounter,
    ) -> Result<()> {
        let cols = self.trailing_cols(r);
        if cols.is_empty() {
            return Ok(());
        }
        let local = cols.start - self.block.col_start;
        let t = cols.len();
        let yc = y.sub(cols.start - r.r0, 0, t, y.cols());
        let zc = z.sub(cols.start - r.r0, 0, t, z.cols());
        if self.is_last {
            // Rows above the square diagonal block, then the block itself.
            let above = cols.start - r.r0;
            if above > 0 {
                let mut blk = self.block.data.sub_mut(r.r0, local, above, t);
                let yr = y.sub(0, 0, above, y.cols());
                let zr = z.sub(0, 0, above, z.cols());
                rank2k_update_block(&mut blk, yr, zr, yc, zc, counter)?;
            }
            let mut sq = self.block.data.sub_mut(cols.start, local, t, t);
            sym_rank2k_update(&mut sq, yc, zc, counter)
        } else {
            let mut blk = self.block.data.sub_mut(r.r0, local, r.m, t);
            rank2k_update_block(&mut blk, y, z, yc, zc, counter)
        }
    }

    /// Lower band entries `(j..=j+b, j)` of every own column, column by column.
    pub fn band_columns(&self) -> Vec<f64> {
        let bw = self.b + 1;
        let mut out = vec![0.0; bw * self.block.width()];
        for (lj, j) in (self.block.col_start..self.block.col_end).enumerate() {
            let col = self.block.data.col(lj);
            for d in 0..bw.min(self.n - j) {
                out[lj * bw + d] = col[j + d];
            }
        }
        out
    }
}

/// Sequential reduction of `A` to a band matrix with bandwidth `cfg.b`.
///
/// Equivalent to a single worker holding every column; returns the band matrix
/// `B = Q_s^T A Q_s` and the panel factors defining `Q_s`.
pub fn sbr_reduce(a: &SymmetricMatrix, cfg: &SbrConfig, counter: &mut FlopCounter) -> Result<(BandMatrix, SbrFactors)> {
    let n = a.n();
    cfg.validate(n)?;
    let b = cfg.b;
    let block = a.column_block(0, 0, n)?;
    let mut worker = SbrWorker::new(block, b, true);
    let mut factors = SbrFactors::new(n, b);
    for x in 0..round_count(n, b) {
        let r = round(n, b, x);
        let mut panel = worker.factor_panel(&r, cfg.inner_block, counter)?;
        let aw = worker.aw_piece(&r, panel.w.view(), counter);
        let z = form_z_from_aw(aw.view(), panel.w.view(), panel.y.view(), counter)?;
        worker.apply_update(&r, panel.y.view(), z.view(), counter)?;
        panel.z = Some(z);
        factors.panels.push(panel);
    }
    let band = band_from_columns(n, b, &[(0, worker.band_columns())])?;
    Ok((band, factors))
}

/// Assembles a band matrix from per-slab column data produced by
/// [`SbrWorker::band_columns`], given each slab's first column.
pub fn band_from_columns(n: usize, b: usize, slabs: &[(usize, Vec<f64>)]) -> Result<BandMatrix> {
    let mut band = BandMatrix::zeros(n, b);
    let bw = b + 1;
    let mut covered = 0;
    for (start, data) in slabs {
        if data.len() % bw != 0 || *start != covered {
            return shape_err("band_from_columns", format!("slab at column {start} does not continue at {covered}"));
        }
        let width = data.len() / bw;
        for lj in 0..width {
            let j = start + lj;
            for d in 0..bw.min(n - j) {
                band.set(j + d, j, data[lj * bw + d]);
            }
        }
        covered += width;
    }
    if covered != n {
        return shape_err("band_from_columns", format!("slabs cover {covered} of {n} columns"));
    }
    Ok(band)
}
