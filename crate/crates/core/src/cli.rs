//! Command-line front end.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 policy infeasible on the
//! workload, 3 gradient verification failed.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::exact::Exact;
use crate::numkernel::{
    bitwise_equal, compare_models, finite_difference_check, monolithic_step, regression_batch,
    sharded_step, Mlp, Prng, ShardedMlp, DEFAULT_STEP,
};
use crate::scheduler::Policy;
use crate::simengine::{simulate, Metrics, SimError, TraceDoc};
use crate::workload::{
    parse_workload, serialize_workload, MemoryProfile, SyntheticParams, WorkloadSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

/// Relative error threshold for the finite-difference gradient check.
pub const FD_TOLERANCE: f64 = 1e-5;

/// Parameters probed by finite differences when the network is larger.
const FD_MAX_PARAMS: usize = 4096;

pub const SUMMARY_HEADER: &str = "policy,makespan,utilization,feasible,peak_mem";
pub const COMPARE_HEADER: &str =
    "policy,makespan,utilization,feasible,peak_mem,speedup_vs_model_parallel,shard_best";

#[derive(Debug, Parser)]
#[command(
    name = "shardsim",
    version,
    about = "Shard-parallel multi-model training simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one policy on a workload and write its trace and summary.
    Simulate(SimulateArgs),
    /// Run all three policies on the same workload.
    Compare(CompareArgs),
    /// Check that sharded training matches monolithic training exactly.
    VerifyGradients(VerifyGradientsArgs),
    /// Write a synthetic workload configuration.
    GenWorkload(GenWorkloadArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// task | model | shard
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// CSV summary destination; stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyGradientsArgs {
    /// Comma-separated layer widths, e.g. 4,8,2.
    #[arg(long)]
    pub dims: String,
    #[arg(long)]
    pub shards: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub batch: usize,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
}

#[derive(Debug, Args)]
pub struct GenWorkloadArgs {
    #[arg(long)]
    pub models: u32,
    #[arg(long)]
    pub shards: u32,
    #[arg(long)]
    pub devices: usize,
    /// Cost range as `lo,hi`.
    #[arg(long)]
    pub cost: String,
    /// tight | roomy
    #[arg(long)]
    pub profile: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub minibatches: u32,
    #[arg(long, default_value_t = 1)]
    pub epochs: u32,
    /// Destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One policy's outcome on one workload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub policy: Policy,
    pub makespan: Option<Exact>,
    pub utilization: Option<Exact>,
    /// Model-parallel makespan over this makespan; only when both completed.
    pub speedup_vs_model_parallel: Option<Exact>,
    pub feasible: bool,
    pub peak_memory_per_device: Vec<Exact>,
}

impl RunSummary {
    pub fn completed(policy: Policy, metrics: &Metrics) -> Self {
        Self {
            policy,
            makespan: Some(metrics.makespan),
            utilization: Some(metrics.utilization),
            speedup_vs_model_parallel: None,
            feasible: true,
            peak_memory_per_device: metrics.per_device_peak_memory.clone(),
        }
    }

    pub fn infeasible(policy: Policy) -> Self {
        Self {
            policy,
            makespan: None,
            utilization: None,
            speedup_vs_model_parallel: None,
            feasible: false,
            peak_memory_per_device: Vec::new(),
        }
    }

    pub fn peak_memory(&self) -> Option<Exact> {
        self.peak_memory_per_device.iter().copied().max()
    }

    /// `policy,makespan,utilization,feasible,peak_mem`; blanks when infeasible.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.policy,
            opt(self.makespan, |m| m.plain_decimal(0)),
            opt(self.utilization, |u| u.plain_decimal(1)),
            self.feasible,
            opt(self.peak_memory(), |m| m.plain_decimal(0)),
        )
    }
}

fn opt(x: Option<Exact>, f: impl Fn(&Exact) -> String) -> String {
    x.as_ref().map(f).unwrap_or_default()
}

/// Parses process arguments and runs the chosen command.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli, out, err),
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            code
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, out, err),
        Command::Compare(a) => cmd_compare(&a, out, err),
        Command::VerifyGradients(a) => cmd_verify_gradients(&a, out, err),
        Command::GenWorkload(a) => cmd_gen_workload(&a, out, err),
    }
}

fn load_config(path: &Path, err: &mut dyn Write) -> Option<WorkloadSpec> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
            return None;
        }
    };
    match parse_workload(&text) {
        Ok(spec) => Some(spec),
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            None
        }
    }
}

fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write, err: &mut dyn Write) -> bool {
    let result = match path {
        Some(p) => fs::write(p, text),
        None => out.write_all(text.as_bytes()),
    };
    if let Err(e) = &result {
        let target = path.map_or("stdout".to_string(), |p| p.display().to_string());
        let _ = writeln!(err, "error: cannot write {target}: {e}");
    }
    result.is_ok()
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let policy: Policy = match args.policy.parse() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let Some(spec) = load_config(&args.config, err) else {
        return EXIT_INPUT;
    };
    let (summary, code) = match simulate(&spec, policy) {
        Ok((metrics, trace)) => {
            if let Some(path) = &args.trace {
                let doc = TraceDoc::new(&trace, &metrics).to_json();
                if !emit(Some(path), &doc, out, err) {
                    return EXIT_INPUT;
                }
            }
            (RunSummary::completed(policy, &metrics), EXIT_OK)
        }
        Err(e) if e.is_infeasible() => {
            let _ = writeln!(err, "{policy} policy infeasible: {e}");
            (RunSummary::infeasible(policy), EXIT_INFEASIBLE)
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let csv = format!("{SUMMARY_HEADER}\n{}\n", summary.csv_row());
    if !emit(args.summary.as_deref(), &csv, out, err) {
        return EXIT_INPUT;
    }
    code
}

/// Runs every policy on `spec`, concurrently, and fills in speedups.
pub fn compare_policies(spec: &WorkloadSpec) -> Result<Vec<RunSummary>, SimError> {
    let results: Vec<Result<(Metrics, _), SimError>> = std::thread::scope(|s| {
        let handles: Vec<_> = Policy::ALL
            .iter()
            .map(|&p| s.spawn(move || simulate(spec, p)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    for (policy, result) in Policy::ALL.into_iter().zip(results) {
        rows.push(match result {
            Ok((m, _)) => RunSummary::completed(policy, &m),
            Err(e) if e.is_infeasible() => RunSummary::infeasible(policy),
            Err(e) => return Err(e),
        });
    }
    let model = rows
        .iter()
        .find(|r| r.policy == Policy::ModelParallel)
        .and_then(|r| r.makespan);
    for r in &mut rows {
        r.speedup_vs_model_parallel = match (model, r.makespan) {
            (Some(base), Some(m)) if m.is_positive() => Some(base / m),
            _ => None,
        };
    }
    Ok(rows)
}

/// Shard-parallel completed and is no slower than any other completed policy.
pub fn shard_is_best(rows: &[RunSummary]) -> bool {
    let Some(shard) = rows
        .iter()
        .find(|r| r.policy == Policy::ShardParallel)
        .and_then(|r| r.makespan)
    else {
        return false;
    };
    rows.iter().filter_map(|r| r.makespan).all(|m| shard <= m)
}

pub fn compare_csv(rows: &[RunSummary]) -> String {
    let best = shard_is_best(rows);
    let mut csv = format!("{COMPARE_HEADER}\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            r.csv_row(),
            opt(r.speedup_vs_model_parallel, |s| s.plain_decimal(1)),
            best
        ));
    }
    csv
}

pub fn cmd_compare(args: &CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(spec) = load_config(&args.config, err) else {
        return EXIT_INPUT;
    };
    let rows = match compare_policies(&spec) {
        Ok(rows) => rows,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    if emit(args.out.as_deref(), &compare_csv(&rows), out, err) {
        EXIT_OK
    } else {
        EXIT_INPUT
    }
}

fn parse_dims(text: &str) -> Option<Vec<usize>> {
    text.split(',').map(|d| d.trim().parse().ok()).collect()
}

/// Outcome of a monolithic-versus-sharded training comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientVerdict {
    pub max_diff: f64,
    pub bitwise_equal: bool,
    pub fd_max_rel_error: f64,
    pub fd_skipped_kinks: usize,
    pub params: usize,
    pub final_loss: f64,
}

impl GradientVerdict {
    pub fn passed(&self) -> bool {
        self.bitwise_equal && self.max_diff == 0.0 && self.fd_max_rel_error < FD_TOLERANCE
    }
}

/// Trains the same seeded network monolithically and shard by shard on one
/// fixed regression batch and compares the results.
pub fn verify_gradients(
    dims: &[usize],
    shards: usize,
    seed: u64,
    batch: usize,
    steps: usize,
    lr: f64,
) -> Result<GradientVerdict, crate::numkernel::KernelError> {
    let model = Mlp::init(dims, seed)?;
    let sharding = ShardedMlp::even(model.layers.len(), shards)?;
    let mut data_rng = Prng::new(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)?;
    let (x, t) = regression_batch(batch, dims[0], dims[dims.len() - 1], &mut data_rng);

    let fd = finite_difference_check(&model, &x, &t, DEFAULT_STEP, Some(FD_MAX_PARAMS))?;

    let mut mono = model.clone();
    let mut sharded = model;
    let mut final_loss = 0.0;
    for _ in 0..steps {
        let (m, loss) = monolithic_step(&mono, &x, &t, lr)?;
        mono = m;
        sharded = sharded_step(&sharded, &sharding, &x, &t, lr)?.0;
        final_loss = loss;
    }
    Ok(GradientVerdict {
        max_diff: compare_models(&mono, &sharded)?,
        bitwise_equal: bitwise_equal(&mono, &sharded),
        fd_max_rel_error: fd.max_rel_error,
        fd_skipped_kinks: fd.skipped_kinks,
        params: mono.param_count(),
        final_loss,
    })
}

pub fn cmd_verify_gradients(
    args: &VerifyGradientsArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let Some(dims) = parse_dims(&args.dims) else {
        let _ = writeln!(
            err,
            "error: --dims must be a comma-separated list of integers"
        );
        return EXIT_INPUT;
    };
    if args.batch == 0 {
        let _ = writeln!(err, "error: --batch must be >= 1");
        return EXIT_INPUT;
    }
    let verdict = match verify_gradients(
        &dims,
        args.shards,
        args.seed,
        args.batch,
        args.steps,
        args.lr,
    ) {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let _ = writeln!(out, "max_diff={}", verdict.max_diff);
    let _ = writeln!(out, "bitwise_equal={}", verdict.bitwise_equal);
    let _ = writeln!(out, "fd_max_rel_err={:e}", verdict.fd_max_rel_error);
    let _ = writeln!(out, "fd_skipped_kinks={}", verdict.fd_skipped_kinks);
    let _ = writeln!(out, "params={}", verdict.params);
    let _ = writeln!(
        out,
        "verdict={}",
        if verdict.passed() { "pass" } else { "fail" }
    );
    if verdict.passed() {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    }
}

pub fn cmd_gen_workload(args: &GenWorkloadArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let range = args
        .cost
        .split_once(',')
        .and_then(|(lo, hi)| Some((Exact::parse(lo).ok()?, Exact::parse(hi).ok()?)));
    let Some(range) = range else {
        let _ = writeln!(err, "error: --cost must be `lo,hi`");
        return EXIT_INPUT;
    };
    let profile: MemoryProfile = match args.profile.parse() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let params = SyntheticParams::new(
        args.models,
        args.shards,
        args.devices,
        range,
        profile,
        args.seed,
    )
    .with_minibatches(args.minibatches)
    .with_epochs(args.epochs);
    let text = match params.generate().and_then(|spec| serialize_workload(&spec)) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    if emit(args.out.as_deref(), &format!("{text}\n"), out, err) {
        EXIT_OK
    } else {
        EXIT_INPUT
    }
}
