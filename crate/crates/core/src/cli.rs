//! Command-line front end: `gen`, `solve`, `simulate` and `verify`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or I/O error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{EvdError, Result};
use crate::io::{read_matrix, read_vector, write_matrix, write_vector};
use crate::matgen::{generate, SpectrumKind, SpectrumSpec};
use crate::matrix::SymmetricMatrix;
use crate::pipeline::sim::sim_chain;
use crate::pipeline::{run, simulate, validate_trace, CostModel, Order, PipelineConfig, Skew, TraceRules};
use crate::verify::{max_eigenvalue_gap, AccuracyReport, DEFAULT_SLACK};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const MATRIX_FILE: &str = "matrix.evd";
const SPECTRUM_FILE: &str = "spectrum.evd";
const LAMBDA_FILE: &str = "lambda.evd";
const Q_FILE: &str = "q.evd";

#[derive(Debug, Parser)]
#[command(name = "pipevd", version, about = "Pipelined two-stage symmetric eigensolver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a symmetric matrix with a prescribed spectrum.
    Gen(GenArgs),
    /// Solve a matrix file, or a freshly generated matrix.
    Solve(SolveArgs),
    /// Simulate pipelined and sequential schedules under a cost model.
    Simulate(SimulateArgs),
    /// Check a solution against its matrix or its exact spectrum.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Dist {
    Cluster0,
    Cluster1,
    Geometric,
    Arithmetic,
    Normal,
    Uniform,
}

impl From<Dist> for SpectrumKind {
    fn from(d: Dist) -> Self {
        match d {
            Dist::Cluster0 => SpectrumKind::Cluster0,
            Dist::Cluster1 => SpectrumKind::Cluster1,
            Dist::Geometric => SpectrumKind::Geometric,
            Dist::Arithmetic => SpectrumKind::Arithmetic,
            Dist::Normal => SpectrumKind::Normal,
            Dist::Uniform => SpectrumKind::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    Pipelined,
    Sequential,
    Conventional,
}

impl From<OrderArg> for Order {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Pipelined => Order::Pipelined,
            OrderArg::Sequential => Order::Sequential,
            OrderArg::Conventional => Order::Conventional,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct MatrixArgs {
    /// Matrix order.
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    /// Eigenvalue distribution.
    #[arg(long, value_enum, default_value_t = Dist::Uniform)]
    #[serde(with = "dist_name")]
    pub dist: Dist,
    /// Condition number for the conditioned distributions.
    #[arg(long, default_value_t = 1e8)]
    pub cond: f64,
    /// Largest eigenvalue for the conditioned distributions.
    #[arg(long, default_value_t = 1e6)]
    pub lmax: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl MatrixArgs {
    fn spec(&self) -> SpectrumSpec {
        SpectrumSpec { cond: self.cond, lambda_max: self.lmax, ..SpectrumSpec::new(self.dist.into(), self.n, self.seed) }
    }
}

mod dist_name {
    use super::Dist;
    use clap::ValueEnum;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Dist, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(d.to_possible_value().expect("no skipped variants").get_name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Dist, D::Error> {
        let s = String::deserialize(d)?;
        Dist::from_str(&s, true).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub matrix: MatrixArgs,
    /// Output directory for the matrix and its spectrum sidecar.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Matrix file to solve; when absent a matrix is generated from the
    /// distribution flags.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    pub gen: MatrixArgs,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Bandwidth of the intermediate band matrix.
    #[arg(long, default_value_t = 32)]
    pub band: usize,
    #[arg(long, value_enum, default_value_t = OrderArg::Pipelined)]
    pub order: OrderArg,
    /// Eigenvector row split skew in [0, 0.05], or `auto`.
    #[arg(long, default_value = "0")]
    pub skew: String,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub vectors: Switch,
    /// Trace file (NDJSON); defaults to `trace.ndjson` in the output directory.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Cost model JSON; defaults to the calibrated model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Problem size, overriding the model's.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[arg(long, default_value_t = 32)]
    pub band: usize,
    /// Trace file for the pipelined schedule.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Directory written by `solve`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Matrix file; defaults to the one in the output directory.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    pub slack: f64,
}

/// Record of a solve, sufficient to repeat it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub matrix: PathBuf,
    /// Generation parameters when the matrix was generated by `solve`.
    pub generated: Option<MatrixArgs>,
    pub config: PipelineConfig,
    /// Skew actually used, after `auto` resolution.
    pub skew_used: f64,
    pub wall_seconds: f64,
    /// `4 n^3 / time`, in flop/s.
    pub throughput: f64,
    pub accuracy: Option<AccuracyReport>,
    pub comm_total_words: u64,
    pub comm_by_stage: std::collections::BTreeMap<String, u64>,
    pub artifacts: Artifacts,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifacts {
    pub lambda: PathBuf,
    pub q: Option<PathBuf>,
    pub trace: PathBuf,
    pub ledger: PathBuf,
    pub flops: PathBuf,
}

/// Spectrum comparison printed by `verify` when no eigenvectors exist.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub max_gap: f64,
    pub tolerance: f64,
    pub bound_ok: bool,
}

pub fn exit_code(e: &EvdError) -> i32 {
    match e {
        EvdError::NoConvergence { .. }
        | EvdError::OracleNoConvergence { .. }
        | EvdError::Protocol { .. }
        | EvdError::Worker { .. }
        | EvdError::Cycle(_)
        | EvdError::InfeasiblePlan(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn write_generated(args: &MatrixArgs, dir: &Path) -> Result<SymmetricMatrix> {
    let (a, lambda) = generate(&args.spec())?;
    fs::create_dir_all(dir)?;
    write_matrix(dir.join(MATRIX_FILE), a.matrix())?;
    write_vector(dir.join(SPECTRUM_FILE), &lambda)?;
    Ok(a)
}

pub fn cmd_gen(args: &GenArgs) -> Result<i32> {
    write_generated(&args.matrix, &args.out)?;
    println!("wrote {} and {}", args.out.join(MATRIX_FILE).display(), args.out.join(SPECTRUM_FILE).display());
    Ok(EXIT_OK)
}

fn parse_skew(s: &str) -> Result<Skew> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Skew::Auto);
    }
    s.parse::<f64>()
        .map(Skew::Fixed)
        .map_err(|_| EvdError::InvalidArgument(format!("skew '{s}' is neither a number nor 'auto'")))
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    fs::create_dir_all(&args.out)?;
    let (a, matrix_path, generated) = match &args.matrix {
        Some(path) => (SymmetricMatrix::new(read_matrix(path)?)?, path.clone(), None),
        None => (write_generated(&args.gen, &args.out)?, args.out.join(MATRIX_FILE), Some(args.gen.clone())),
    };
    let n = a.n();
    let trace_path = args.trace.clone().unwrap_or_else(|| args.out.join("trace.ndjson"));
    let cfg = PipelineConfig {
        workers: args.workers,
        b: args.band,
        order: args.order.into(),
        back_skew: parse_skew(&args.skew)?,
        trace_path: Some(trace_path.clone()),
        want_vectors: args.vectors == Switch::On,
        seed: args.gen.seed,
        ..PipelineConfig::default()
    };
    cfg.validate(n)?;

    let t0 = Instant::now();
    let out = run(&a, &cfg)?;
    let wall = t0.elapsed().as_secs_f64();

    let lambda_path = args.out.join(LAMBDA_FILE);
    write_vector(&lambda_path, &out.result.lambda)?;
    let mut q_path = None;
    let mut accuracy = None;
    if let Some(q) = &out.result.q {
        let p = args.out.join(Q_FILE);
        write_matrix(&p, q)?;
        q_path = Some(p);
        accuracy = Some(AccuracyReport::compute(a.matrix(), q, &out.result.lambda, DEFAULT_SLACK)?);
    } else if args.out.join(Q_FILE).exists() {
        fs::remove_file(args.out.join(Q_FILE))?;
    }
    let ledger_path = args.out.join("ledger.csv");
    fs::write(&ledger_path, out.ledger.to_csv())?;
    let flops_path = args.out.join("flops.csv");
    fs::write(&flops_path, out.flops.to_csv())?;

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        matrix: matrix_path,
        generated,
        config: cfg,
        skew_used: out.skew,
        wall_seconds: wall,
        throughput: 4.0 * (n as f64).powi(3) / wall,
        accuracy: accuracy.clone(),
        comm_total_words: out.ledger.total_words(),
        comm_by_stage: out.ledger.by_stage(),
        artifacts: Artifacts { lambda: lambda_path, q: q_path, trace: trace_path, ledger: ledger_path, flops: flops_path },
    };
    fs::write(args.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    println!("n = {n}, workers = {}, order = {}, wall {wall:.3} s, {:.3} GFLOP/s (4n^3/time)", args.workers, args.order_name(), manifest.throughput / 1e9);
    match accuracy {
        Some(r) => {
            println!("backward error {:.3e}, orthogonality {:.3e}, bound_ok = {}", r.backward, r.ortho, r.bound_ok);
            Ok(if r.bound_ok { EXIT_OK } else { EXIT_VERIFY })
        }
        None => Ok(EXIT_OK),
    }
}

impl SolveArgs {
    fn order_name(&self) -> &'static str {
        Order::from(self.order).name()
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let mut model = match &args.model {
        Some(p) => CostModel::from_json(&fs::read_to_string(p)?)?,
        None => CostModel::default(),
    };
    if let Some(n) = args.n {
        model.n = n;
    }
    let mut spans = [0u64; 2];
    for (slot, order) in [Order::Pipelined, Order::Sequential].into_iter().enumerate() {
        let cfg = PipelineConfig::new(args.workers, args.band, order);
        let sim = simulate(&model, &cfg)?;
        validate_trace(&sim.events, &TraceRules { workers: args.workers, sbr_chain: sim_chain(args.workers) }, None)
            .map_err(|v| EvdError::Cycle(v.to_string()))?;
        if order == Order::Pipelined {
            if let Some(p) = &args.trace {
                crate::pipeline::trace::write_ndjson(p, &sim.events)?;
            }
        }
        spans[slot] = sim.makespan;
    }
    println!("pipelined makespan: {}", spans[0]);
    println!("sequential makespan: {}", spans[1]);
    println!("ratio: {:.4}", spans[0] as f64 / spans[1] as f64);
    Ok(EXIT_OK)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let matrix_path = args.matrix.clone().unwrap_or_else(|| args.out.join(MATRIX_FILE));
    let mut lambda = read_vector(args.out.join(LAMBDA_FILE))?;
    let q_path = args.out.join(Q_FILE);
    if q_path.exists() {
        let a = read_matrix(&matrix_path)?;
        let q = read_matrix(&q_path)?;
        let report = AccuracyReport::compute(&a, &q, &lambda, args.slack)?;
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(if report.bound_ok { EXIT_OK } else { EXIT_VERIFY });
    }
    let spectrum_path = matrix_path.with_file_name(SPECTRUM_FILE);
    let mut exact = read_vector(&spectrum_path)?;
    if exact.len() != lambda.len() {
        return Err(EvdError::Shape {
            op: "verify",
            detail: format!("{} computed vs {} exact eigenvalues", lambda.len(), exact.len()),
        });
    }
    lambda.sort_by(f64::total_cmp);
    exact.sort_by(f64::total_cmp);
    let scale = exact.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tolerance = args.slack * lambda.len() as f64 * f64::EPSILON * scale;
    let max_gap = max_eigenvalue_gap(&lambda, &exact);
    let report = SpectrumReport { max_gap, tolerance, bound_ok: max_gap <= tolerance };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.bound_ok { EXIT_OK } else { EXIT_VERIFY })
}
