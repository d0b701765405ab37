//! Threaded execution: one thread per worker plus a host thread for the
//! tridiagonal solver.

use std::collections::{BTreeMap, VecDeque};
use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use super::comm::{CommLedger, Endpoint};
use super::trace::{write_ndjson, Stage, TraceEvent, TraceRules, HOST};
use super::{back_plan, owner_of, partition_aligned, Order, PipelineConfig, Skew};
use crate::back::{apply_sbr_q, bc_back_apply, final_gemm_transposed, BackPlan, Direction, SbrBackTransposed};
use crate::bulge::{bc_reduce_partition, stitch, BandSlab, BulgeReflectorSet, OverlapBlock, PartialTridiagonal};
use crate::error::{EvdError, Result};
use crate::matrix::{FlopCounter, Matrix, ReflectorPanel, SymmetricMatrix};
use crate::sbr::{form_z_from_aw, round, round_count, SbrWorker};
use crate::tridiag::{normalize_signs, tridiag_eig, EigenResult};

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub result: EigenResult,
    pub trace: Vec<TraceEvent>,
    pub ledger: CommLedger,
    pub flops: FlopCounter,
    pub plan: BackPlan,
    pub skew: f64,
    pub blocks: Vec<Range<usize>>,
    /// Panel owner of each band-reduction round.
    pub round_owners: Vec<usize>,
    pub wall_seconds: f64,
}

impl RunOutput {
    /// Validator rules matching this run's layout.
    pub fn rules(&self) -> TraceRules {
        TraceRules {
            workers: self.blocks.len(),
            sbr_chain: self.round_owners.iter().enumerate().map(|(x, &o)| (o, x)).collect(),
        }
    }

    pub fn idle_fractions(&self) -> Vec<f64> {
        super::trace::idle_fractions(&self.trace, self.blocks.len())
    }
}

enum Msg {
    Panel { round: usize, panel: Arc<ReflectorPanel> },
    Aw { round: usize, from: usize, piece: Matrix },
    Overlap(OverlapBlock),
    Reflectors { from: usize, set: Arc<BulgeReflectorSet> },
    Barrier { id: usize, from: usize },
    Qd(Arc<Matrix>),
    Abort,
}

enum HostMsg {
    Tridiag(PartialTridiagonal),
    Block { from: usize, block: Matrix },
    Abort,
}

/// First failure wins; later ones are consequences of it.
type FirstError = Arc<Mutex<Option<EvdError>>>;

fn record_failure(slot: &FirstError, e: EvdError) {
    let mut g = slot.lock().unwrap_or_else(|p| p.into_inner());
    if g.is_none() {
        *g = Some(e);
    }
}

struct Net {
    me: usize,
    peers: Vec<Sender<Msg>>,
    host: Sender<HostMsg>,
    ledger: CommLedger,
    trace: Vec<TraceEvent>,
    epoch: Instant,
    stage: &'static str,
}

impl Net {
    fn now(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    fn event(&mut self, stage: Stage, block: usize, t_start: u64, t_end: u64) {
        self.trace.push(TraceEvent::new(self.me as i64, stage, block, t_start, t_end));
    }

    fn comm(&mut self, block: usize, words: u64) {
        let t = self.now();
        self.trace.push(TraceEvent { worker: self.me as i64, stage: Stage::Comm, block, t_start: t, t_end: t, words });
    }

    /// Sends to every other worker; counted once.
    fn broadcast(&mut self, stage: &str, words: u64, block: usize, make: impl Fn() -> Msg) {
        if self.peers.len() <= 1 {
            return;
        }
        self.ledger.record(Endpoint::Worker(self.me), Endpoint::All, stage, words);
        self.comm(block, words);
        for (j, tx) in self.peers.iter().enumerate() {
            if j != self.me {
                // A closed channel means that worker already failed; the
                // failure is reported through the shared error slot.
                let _ = tx.send(make());
            }
        }
    }

    fn send(&mut self, to: usize, stage: &str, words: u64, block: usize, msg: Msg) {
        self.ledger.record(Endpoint::Worker(self.me), Endpoint::Worker(to), stage, words);
        self.comm(block, words);
        let _ = self.peers[to].send(msg);
    }

    fn send_host(&mut self, stage: &str, words: u64, msg: HostMsg) {
        self.ledger.record(Endpoint::Worker(self.me), Endpoint::Host, stage, words);
        self.comm(0, words);
        let _ = self.host.send(msg);
    }

    fn barrier(&mut self, mb: &mut Mailbox, id: usize) -> Result<()> {
        let w = self.peers.len();
        for (j, tx) in self.peers.iter().enumerate() {
            if j != self.me {
                let _ = tx.send(Msg::Barrier { id, from: self.me });
            }
        }
        for j in (0..w).filter(|&j| j != self.me) {
            mb.take(self, |m| matches!(m, Msg::Barrier { id: i, from } if *i == id && *from == j))?;
        }
        Ok(())
    }
}

/// Receive side of a worker: keeps messages that arrive before they are
/// wanted, so results never depend on arrival order.
struct Mailbox {
    rx: Receiver<Msg>,
    stash: VecDeque<Msg>,
    /// Column-product pieces of rounds at or after this one are not needed.
    aw_limit: usize,
}

impl Mailbox {
    fn accept(&mut self, net: &Net, m: Msg) -> Result<Option<Msg>> {
        match m {
            Msg::Abort => Err(EvdError::Worker {
                worker: net.me,
                stage: net.stage,
                detail: "aborted after another thread failed".into(),
            }),
            Msg::Aw { round, .. } if round >= self.aw_limit => Ok(None),
            m => Ok(Some(m)),
        }
    }

    fn take(&mut self, net: &Net, mut want: impl FnMut(&Msg) -> bool) -> Result<Msg> {
        if let Some(pos) = self.stash.iter().position(&mut want) {
            return Ok(self.stash.remove(pos).expect("position is valid"));
        }
        loop {
            let m = self.rx.recv().map_err(|_| EvdError::Protocol {
                worker: net.me,
                stage: net.stage,
                detail: "channel closed while waiting for a message".into(),
            })?;
            if let Some(m) = self.accept(net, m)? {
                if want(&m) {
                    return Ok(m);
                }
                self.stash.push_back(m);
            }
        }
    }

    fn try_take(&mut self, net: &Net, mut want: impl FnMut(&Msg) -> bool) -> Result<Option<Msg>> {
        while let Ok(m) = self.rx.try_recv() {
            if let Some(m) = self.accept(net, m)? {
                self.stash.push_back(m);
            }
        }
        Ok(self.stash.iter().position(&mut want).map(|pos| self.stash.remove(pos).expect("position is valid")))
    }

    fn wait(&mut self, net: &Net) -> Result<()> {
        let m = self.rx.recv().map_err(|_| EvdError::Protocol {
            worker: net.me,
            stage: net.stage,
            detail: "channel closed while idle".into(),
        })?;
        if let Some(m) = self.accept(net, m)? {
            self.stash.push_back(m);
        }
        Ok(())
    }
}

struct WorkerSetup {
    k: usize,
    n: usize,
    cfg: PipelineConfig,
    blocks: Vec<Range<usize>>,
    /// Eigenvector rows (columns for the conventional order) this worker forms.
    share: Range<usize>,
}

struct WorkerState {
    setup: WorkerSetup,
    counter: FlopCounter,
    panels: Vec<Option<Arc<ReflectorPanel>>>,
    reflectors: Option<BulgeReflectorSet>,
}

impl WorkerState {
    fn panel(&mut self, net: &Net, mb: &mut Mailbox, x: usize) -> Result<Arc<ReflectorPanel>> {
        if let Some(p) = &self.panels[x] {
            return Ok(p.clone());
        }
        let Msg::Panel { panel, .. } = mb.take(net, |m| matches!(m, Msg::Panel { round, .. } if *round == x))? else {
            unreachable!("filtered by round")
        };
        if self.setup.cfg.want_vectors {
            self.panels[x] = Some(panel.clone());
        }
        Ok(panel)
    }

    fn try_panel(&mut self, net: &Net, mb: &mut Mailbox, x: usize) -> Result<Option<Arc<ReflectorPanel>>> {
        if let Some(p) = &self.panels[x] {
            return Ok(Some(p.clone()));
        }
        match mb.try_take(net, |m| matches!(m, Msg::Panel { round, .. } if *round == x))? {
            Some(Msg::Panel { panel, .. }) => {
                self.panels[x] = Some(panel.clone());
                Ok(Some(panel))
            }
            _ => Ok(None),
        }
    }

    /// Band reduction rounds this worker takes part in; returns its band slab.
    fn reduce(&mut self, net: &mut Net, mb: &mut Mailbox, a: &SymmetricMatrix) -> Result<BandSlab> {
        let (k, n) = (self.setup.k, self.setup.n);
        let cfg = self.setup.cfg.clone();
        let blocks = self.setup.blocks.clone();
        let blocks = &blocks;
        let (b, w) = (cfg.b, blocks.len());
        let block = a.column_block(k, blocks[k].start, blocks[k].end)?;
        let mut sw = SbrWorker::new(block, b, k + 1 == w);
        net.stage = "SBR";
        self.counter.set_stage("SBR");
        let rounds = round_count(n, b).min(blocks[k].end.div_ceil(b));
        for x in 0..rounds {
            let r = round(n, b, x);
            let owner = owner_of(blocks, r.c0);
            let cols = sw.trailing_cols(&r);
            let (t0, panel) = if owner == k {
                let t0 = net.now();
                let p = Arc::new(sw.factor_panel(&r, cfg.inner_block, &mut self.counter)?);
                if cols.is_empty() {
                    let t1 = net.now();
                    net.event(Stage::Sbr, x, t0, t1);
                }
                let words = (2 * r.m * r.k) as u64;
                net.broadcast("SBR", words, x, || Msg::Panel { round: x, panel: p.clone() });
                if cfg.want_vectors {
                    self.panels[x] = Some(p.clone());
                }
                (t0, p)
            } else {
                let p = self.panel(net, mb, x)?;
                (net.now(), p)
            };
            if cols.is_empty() {
                continue;
            }
            let piece = sw.aw_piece(&r, panel.w.view(), &mut self.counter);
            let t1 = net.now();
            net.event(Stage::Sbr, x, t0, t1);
            let words = (piece.rows() * piece.cols()) as u64;
            if w > 1 {
                let shared = piece.clone();
                net.broadcast("SBR", words, x, || Msg::Aw { round: x, from: k, piece: shared.clone() });
            }
            let mut aw = Matrix::zeros(r.m, r.k);
            for j in owner_of(blocks, r.r0)..w {
                let part = if j == k {
                    piece.clone()
                } else {
                    match mb.take(net, |m| matches!(m, Msg::Aw { round, from, .. } if *round == x && *from == j))? {
                        Msg::Aw { piece, .. } => piece,
                        _ => unreachable!("filtered by round and sender"),
                    }
                };
                let at = blocks[j].start.max(r.r0) - r.r0;
                if at + part.rows() > r.m || part.cols() != r.k {
                    return Err(EvdError::Protocol {
                        worker: k,
                        stage: "SBR",
                        detail: format!("piece from worker {j} does not fit round {x}"),
                    });
                }
                aw.set_block(at, 0, part.view());
            }
            let t2 = net.now();
            let z = form_z_from_aw(aw.view(), panel.w.view(), panel.y.view(), &mut self.counter)?;
            sw.apply_update(&r, panel.y.view(), z.view(), &mut self.counter)?;
            let t3 = net.now();
            net.event(Stage::Sbr, x, t2, t3);
        }
        mb.aw_limit = rounds;
        Ok(BandSlab { n, b, col_start: blocks[k].start, col_end: blocks[k].end, data: sw.band_columns() })
    }

    fn chase(&mut self, net: &mut Net, slab: &BandSlab, incoming: Option<OverlapBlock>) -> Result<()> {
        let k = self.setup.k;
        let w = self.setup.blocks.len();
        net.stage = "BC";
        self.counter.set_stage("BC");
        let t0 = net.now();
        let (part, set, out) = bc_reduce_partition(slab, incoming, k + 1 == w, &mut self.counter).map_err(|e| match e {
            EvdError::Protocol { stage, detail, .. } => EvdError::Protocol { worker: k, stage, detail },
            e => e,
        })?;
        let t1 = net.now();
        net.event(Stage::Bc, k, t0, t1);
        if let Some(ov) = out {
            net.ledger.record_header("BC", ov.header_words() as u64);
            net.send(k + 1, "BC", ov.payload_words() as u64, k, Msg::Overlap(ov));
        }
        let words = (part.d.len() + part.e.len()) as u64;
        net.send_host("Solver", words, HostMsg::Tridiag(part));
        if self.setup.cfg.want_vectors {
            let set = Arc::new(set);
            let shared = set.clone();
            net.broadcast("BC-Gather", set.payload_words() as u64, k, || Msg::Reflectors { from: k, set: shared.clone() });
            self.reflectors = Some(Arc::try_unwrap(set).unwrap_or_else(|s| (*s).clone()));
        }
        Ok(())
    }

    fn take_overlap(&self, net: &Net, mb: &mut Mailbox) -> Result<Option<OverlapBlock>> {
        if self.setup.k == 0 {
            return Ok(None);
        }
        match mb.take(net, |m| matches!(m, Msg::Overlap(_)))? {
            Msg::Overlap(ov) => Ok(Some(ov)),
            _ => unreachable!("filtered"),
        }
    }

    fn gather_reflectors(&mut self, net: &Net, mb: &mut Mailbox) -> Result<BulgeReflectorSet> {
        let w = self.setup.blocks.len();
        let mut all = self.reflectors.take().expect("own reflectors recorded after chasing");
        for j in (0..w).filter(|&j| j != self.setup.k) {
            match mb.take(net, |m| matches!(m, Msg::Reflectors { from, .. } if *from == j))? {
                Msg::Reflectors { set, .. } => all.merge(&set)?,
                _ => unreachable!("filtered"),
            }
        }
        Ok(all)
    }

    fn apply_panel(&mut self, net: &mut Net, acc: &mut SbrBackTransposed, x: usize, p: &ReflectorPanel) -> Result<()> {
        net.stage = "SBR-Back";
        self.counter.set_stage("SBR-Back");
        let t0 = net.now();
        acc.apply(x, p, &mut self.counter)?;
        let t1 = net.now();
        net.event(Stage::SbrBack, x, t0, t1);
        Ok(())
    }

    fn take_qd(&self, net: &Net, mb: &mut Mailbox) -> Result<Arc<Matrix>> {
        match mb.take(net, |m| matches!(m, Msg::Qd(_)))? {
            Msg::Qd(q) => Ok(q),
            _ => unreachable!("filtered"),
        }
    }

    /// Bulge back transformation of the accumulated `Q_s^T` columns followed
    /// by the final multiply with the solver's vectors.
    fn finish_reordered(&mut self, net: &mut Net, mb: &mut Mailbox, mut acc: SbrBackTransposed, sequential: bool) -> Result<()> {
        let k = self.setup.k;
        let u = self.gather_reflectors(net, mb)?;
        net.stage = "BC-Back";
        self.counter.set_stage("BC-Back");
        let t0 = net.now();
        bc_back_apply(&u, &mut acc.q, self.setup.cfg.group, Direction::Transposed, &mut self.counter)?;
        let t1 = net.now();
        net.event(Stage::BcBack, k, t0, t1);
        drop(u);
        if sequential {
            net.barrier(mb, 3)?;
        }
        let qd = self.take_qd(net, mb)?;
        net.stage = "FinalMultiply";
        self.counter.set_stage("FinalMultiply");
        let t2 = net.now();
        let rows = final_gemm_transposed(acc.q.view(), &qd, &mut self.counter)?;
        let t3 = net.now();
        net.event(Stage::FinalMultiply, k, t2, t3);
        let words = (rows.rows() * rows.cols()) as u64;
        net.send_host("Gather", words, HostMsg::Block { from: k, block: rows });
        Ok(())
    }
}

fn worker_main(st: &mut WorkerState, net: &mut Net, mb: &mut Mailbox, a: &SymmetricMatrix) -> Result<()> {
    let (k, n) = (st.setup.k, st.setup.n);
    let order = st.setup.cfg.order;
    let vectors = st.setup.cfg.want_vectors;
    let rounds = round_count(n, st.setup.cfg.b);
    let slab = st.reduce(net, mb, a)?;
    match order {
        Order::Pipelined => {
            let mut acc = SbrBackTransposed::new(n, st.setup.share.clone());
            let mut chased = false;
            loop {
                if !chased {
                    let incoming = if k == 0 {
                        Some(None)
                    } else {
                        mb.try_take(net, |m| matches!(m, Msg::Overlap(_)))?.map(|m| match m {
                            Msg::Overlap(ov) => Some(ov),
                            _ => unreachable!("filtered"),
                        })
                    };
                    if let Some(incoming) = incoming {
                        st.chase(net, &slab, incoming)?;
                        chased = true;
                        continue;
                    }
                }
                let x = acc.panels_applied();
                if vectors && x < rounds {
                    if let Some(p) = st.try_panel(net, mb, x)? {
                        st.apply_panel(net, &mut acc, x, &p)?;
                        st.panels[x] = None;
                        continue;
                    }
                }
                if chased && (!vectors || x == rounds) {
                    break;
                }
                mb.wait(net)?;
            }
            if vectors {
                st.finish_reordered(net, mb, acc, false)?;
            }
        }
        Order::Sequential => {
            net.barrier(mb, 0)?;
            let incoming = st.take_overlap(net, mb)?;
            st.chase(net, &slab, incoming)?;
            if vectors {
                net.barrier(mb, 1)?;
                let mut acc = SbrBackTransposed::new(n, st.setup.share.clone());
                for x in 0..rounds {
                    let p = st.panel(net, mb, x)?;
                    st.apply_panel(net, &mut acc, x, &p)?;
                    st.panels[x] = None;
                }
                net.barrier(mb, 2)?;
                st.finish_reordered(net, mb, acc, true)?;
            }
        }
        Order::Conventional => {
            let incoming = st.take_overlap(net, mb)?;
            st.chase(net, &slab, incoming)?;
            if vectors {
                let u = st.gather_reflectors(net, mb)?;
                let qd = st.take_qd(net, mb)?;
                let cols = st.setup.share.clone();
                let mut m = qd.sub(0, cols.start, n, cols.len()).to_owned();
                drop(qd);
                net.stage = "BC-Back";
                st.counter.set_stage("BC-Back");
                let t0 = net.now();
                bc_back_apply(&u, &mut m, st.setup.cfg.group, Direction::Conventional, &mut st.counter)?;
                let t1 = net.now();
                net.event(Stage::BcBack, k, t0, t1);
                drop(u);
                let panels: Vec<Arc<ReflectorPanel>> = (0..rounds).map(|x| st.panel(net, mb, x)).collect::<Result<_>>()?;
                net.stage = "SBR-Back";
                st.counter.set_stage("SBR-Back");
                let t2 = net.now();
                apply_sbr_q(panels.iter().map(|p| p.as_ref()), &mut m, &mut st.counter)?;
                let t3 = net.now();
                net.event(Stage::SbrBack, k, t2, t3);
                let words = (m.rows() * m.cols()) as u64;
                net.send_host("Gather", words, HostMsg::Block { from: k, block: m });
            }
        }
    }
    Ok(())
}

struct HostOutput {
    result: EigenResult,
    trace: Vec<TraceEvent>,
    ledger: CommLedger,
}

fn host_main(
    n: usize,
    cfg: &PipelineConfig,
    shares: &[Range<usize>],
    rx: &Receiver<HostMsg>,
    peers: &[Sender<Msg>],
    epoch: Instant,
) -> Result<HostOutput> {
    let w = peers.len();
    let closed = || EvdError::Protocol { worker: 0, stage: "Solver", detail: "host channel closed".into() };
    let aborted = || EvdError::Worker { worker: 0, stage: "Solver", detail: "host aborted after a worker failed".into() };
    let mut parts = Vec::with_capacity(w);
    let mut blocks: BTreeMap<usize, Matrix> = BTreeMap::new();
    while parts.len() < w {
        match rx.recv().map_err(|_| closed())? {
            HostMsg::Tridiag(p) => parts.push(p),
            HostMsg::Block { from, block } => {
                blocks.insert(from, block);
            }
            HostMsg::Abort => return Err(aborted()),
        }
    }
    parts.sort_by_key(|p| p.col_start);
    let t0 = epoch.elapsed().as_nanos() as u64;
    let t = stitch(&parts)?;
    let eig = tridiag_eig(&t, cfg.want_vectors)?;
    let t1 = epoch.elapsed().as_nanos() as u64;
    let mut trace = vec![TraceEvent::new(HOST, Stage::Solver, 0, t0, t1)];
    let mut ledger = CommLedger::new();
    let Some(qd) = eig.q else {
        return Ok(HostOutput { result: eig, trace, ledger });
    };
    let qd = Arc::new(qd);
    ledger.record(Endpoint::Host, Endpoint::All, "Solver", (n * n) as u64);
    trace.push(TraceEvent { worker: HOST, stage: Stage::Comm, block: 0, t_start: t1, t_end: t1, words: (n * n) as u64 });
    for tx in peers {
        let _ = tx.send(Msg::Qd(qd.clone()));
    }
    drop(qd);
    while blocks.len() < w {
        match rx.recv().map_err(|_| closed())? {
            HostMsg::Block { from, block } => {
                blocks.insert(from, block);
            }
            HostMsg::Tridiag(_) => return Err(EvdError::Protocol { worker: 0, stage: "Solver", detail: "duplicate tridiagonal part".into() }),
            HostMsg::Abort => return Err(aborted()),
        }
    }
    let mut q = Matrix::zeros(n, n);
    for (k, block) in &blocks {
        let share = &shares[*k];
        if cfg.order == Order::Conventional {
            q.set_block(0, share.start, block.view());
        } else {
            q.set_block(share.start, 0, block.view());
        }
    }
    normalize_signs(&mut q);
    Ok(HostOutput { result: EigenResult { lambda: eig.lambda, q: Some(q), vectors_computed: true }, trace, ledger })
}

/// Runs the pipeline with a fixed eigenvector row skew.
pub fn run_once(a: &SymmetricMatrix, cfg: &PipelineConfig, skew: f64) -> Result<RunOutput> {
    let n = a.n();
    cfg.validate(n)?;
    let w = cfg.workers;
    let blocks = partition_aligned(n, w, cfg.b)?;
    let plan = back_plan(n, w, skew)?;
    let shares = plan.ranges();
    let rounds = round_count(n, cfg.b);
    let round_owners: Vec<usize> = (0..rounds).map(|x| owner_of(&blocks, round(n, cfg.b, x).c0)).collect();

    let (txs, rxs): (Vec<Sender<Msg>>, Vec<Receiver<Msg>>) = (0..w).map(|_| channel()).unzip();
    let (host_tx, host_rx) = channel();
    let first_error: FirstError = Arc::new(Mutex::new(None));
    let epoch = Instant::now();

    let (worker_outputs, host_output) = std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(w);
        for (k, rx) in rxs.into_iter().enumerate() {
            let setup =
                WorkerSetup { k, n, cfg: cfg.clone(), blocks: blocks.clone(), share: shares[k].clone() };
            let peers = txs.clone();
            let host = host_tx.clone();
            let first_error = first_error.clone();
            handles.push(scope.spawn(move || {
                let mut net =
                    Net { me: k, peers, host, ledger: CommLedger::new(), trace: Vec::new(), epoch, stage: "SBR" };
                let mut mb = Mailbox { rx, stash: VecDeque::new(), aw_limit: usize::MAX };
                let mut st = WorkerState { setup, counter: FlopCounter::new(), panels: vec![None; rounds], reflectors: None };
                let outcome = catch_unwind(AssertUnwindSafe(|| worker_main(&mut st, &mut net, &mut mb, a)));
                let failure = match outcome {
                    Ok(Ok(())) => None,
                    Ok(Err(e)) => Some(e),
                    Err(panic) => {
                        let detail = panic
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "panic".into());
                        Some(EvdError::Worker { worker: k, stage: net.stage, detail })
                    }
                };
                if let Some(e) = failure {
                    let secondary = matches!(&e, EvdError::Worker { detail, .. } if detail.starts_with("aborted"));
                    if !secondary {
                        record_failure(&first_error, e);
                    }
                    for (j, tx) in net.peers.iter().enumerate() {
                        if j != k {
                            let _ = tx.send(Msg::Abort);
                        }
                    }
                    let _ = net.host.send(HostMsg::Abort);
                    return None;
                }
                Some((net.trace, net.ledger, st.counter))
            }));
        }
        drop(host_tx);
        let host = match host_main(n, cfg, &shares, &host_rx, &txs, epoch) {
            Ok(h) => Some(h),
            Err(e) => {
                if !matches!(e, EvdError::Worker { .. }) {
                    record_failure(&first_error, e);
                }
                for tx in &txs {
                    let _ = tx.send(Msg::Abort);
                }
                None
            }
        };
        drop(txs);
        let outs: Vec<_> = handles.into_iter().map(|h| h.join().ok().flatten()).collect();
        (outs, host)
    });
    let wall_seconds = epoch.elapsed().as_secs_f64();

    if let Some(e) = first_error.lock().unwrap_or_else(|p| p.into_inner()).take() {
        return Err(e);
    }
    let Some(host) = host_output else {
        return Err(EvdError::Worker { worker: 0, stage: "Solver", detail: "host produced no output".into() });
    };
    let mut trace = host.trace;
    let mut ledger = host.ledger;
    let mut flops = FlopCounter::new();
    for (k, out) in worker_outputs.into_iter().enumerate() {
        let Some((t, l, c)) = out else {
            return Err(EvdError::Worker { worker: k, stage: "join", detail: "worker produced no output".into() });
        };
        trace.extend(t);
        ledger.merge(&l);
        flops.merge(&c);
    }
    trace.sort_by_key(|e| (e.t_start, e.t_end, e.worker));
    if let Some(path) = &cfg.trace_path {
        write_ndjson(path, &trace)?;
    }
    Ok(RunOutput { result: host.result, trace, ledger, flops, plan, skew, blocks, round_owners, wall_seconds })
}

/// Skew that would let the worker finishing its forward stages last take
/// proportionally fewer eigenvector rows.
pub fn derive_skew(out: &RunOutput) -> f64 {
    let w = out.blocks.len();
    if w < 2 {
        return 0.0;
    }
    let bc_end = |k: usize| {
        out.trace.iter().filter(|e| e.worker == k as i64 && e.stage == Stage::Bc).map(|e| e.t_end).max().unwrap_or(0)
    };
    let back: u64 = out
        .trace
        .iter()
        .filter(|e| e.worker >= 0 && matches!(e.stage, Stage::SbrBack | Stage::BcBack | Stage::FinalMultiply))
        .map(TraceEvent::duration)
        .sum();
    let rows: usize = out.plan.sizes.iter().sum();
    if back == 0 || rows == 0 {
        return 0.0;
    }
    let per_row = back as f64 / rows as f64;
    let base = (rows / w) as f64;
    let lag = bc_end(w - 1) as f64 - bc_end(0) as f64;
    (lag / (2.0 * per_row * base)).clamp(0.0, crate::back::MAX_SKEW)
}

/// Runs the pipeline. With [`Skew::Auto`] a first run without skew
/// measures how late each worker finishes its forward stages, and a second
/// run uses the derived skew.
pub fn run(a: &SymmetricMatrix, cfg: &PipelineConfig) -> Result<RunOutput> {
    match cfg.back_skew {
        Skew::Fixed(s) => run_once(a, cfg, s),
        Skew::Auto => {
            let probe_cfg = PipelineConfig { trace_path: None, ..cfg.clone() };
            let probe = run_once(a, &probe_cfg, 0.0)?;
            run_once(a, cfg, derive_skew(&probe))
        }
    }
}
