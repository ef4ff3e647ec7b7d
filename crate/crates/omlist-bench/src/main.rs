//! Experiment runner for the concurrent order-maintenance list.
//!
//! Four subcommands: `run` measures one configuration and appends CSV rows
//! (one per repetition); `sweep` crosses worker counts and lock kinds and
//! reports per-cell means, 95% confidence intervals, and speedups against
//! the single-worker spin-lock baseline; `scale` re-runs one configuration
//! over ascending sizes (operation counts scaled proportionally) and reports
//! elapsed-time ratios; `stress` drives the adversarial concurrent
//! correctness harness and reports its verdict.
//!
//! CSV goes to `--out` (append-safe, header written only to a fresh file) or
//! to standard output; human-readable status and summary tables go to the
//! other stream, so piped CSV stays clean. Exit status: 0 success, 1 runtime
//! failure, 2 configuration error, 3 correctness-invariant failure.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::{self, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use omlist::bench::{execute, BenchError, RunConfig, RunOutcome, RunRecord, CSV_HEADER};
use omlist::stress::{run_stress, StressError, StressPlan};
use omlist::workload::{CaseKind, ExperimentKind, WorkloadSpec};
use omlist::{LockKind, OpError, OrderList};

#[derive(Parser)]
#[command(
    name = "omlist-bench",
    about = "Benchmark and stress harness for the omlist concurrent order-maintenance list",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Measure one configuration; one CSV row per repetition.
    Run(RunArgs),
    /// Cross worker counts × lock kinds; summarize mean, CI, and speedup.
    Sweep(SweepArgs),
    /// Re-run one configuration over ascending sizes; report time ratios.
    Scale(ScaleArgs),
    /// Adversarial concurrent correctness run with continuous validation.
    Stress(StressArgs),
}

#[derive(Args, Clone)]
struct CoreArgs {
    /// Operation stream of the timed phase: insert, order, delete, or mixed.
    #[arg(long)]
    experiment: ExperimentKind,
    /// Position distribution: no, few, many, or max.
    #[arg(long)]
    case: CaseKind,
    /// Total timed operations, split across the workers.
    #[arg(long)]
    ops: u64,
    /// Workload RNG seed; identical seeds reproduce identical streams.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Measured repetitions per configuration cell.
    #[arg(long, default_value_t = 10)]
    reps: u32,
    /// Append CSV rows to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Capacity exponent: the list holds at most 2^bits live items.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(4..=32))]
    capacity_bits: u32,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    core: CoreArgs,
    /// Initial list size (insert positions refer to these items).
    #[arg(long)]
    size: u64,
    #[arg(long, default_value_t = 1)]
    workers: u32,
    /// Node-lock implementation: spin or blocking.
    #[arg(long, default_value = "spin")]
    lock: LockKind,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    core: CoreArgs,
    /// Initial list size (insert positions refer to these items).
    #[arg(long)]
    size: u64,
    /// Worker counts to cross, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    workers: Vec<u32>,
    /// Lock kinds to cross, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "spin")]
    lock: Vec<LockKind>,
}

#[derive(Args)]
struct ScaleArgs {
    #[command(flatten)]
    core: CoreArgs,
    /// Ascending sizes; each must be a multiple of the smallest. --ops is
    /// the operation count at the smallest size and scales with it.
    #[arg(long, value_delimiter = ',', required = true)]
    size: Vec<u64>,
    #[arg(long, default_value_t = 8)]
    workers: u32,
    /// Node-lock implementation: spin or blocking.
    #[arg(long, default_value = "spin")]
    lock: LockKind,
}

#[derive(Copy, Clone, ValueEnum)]
enum MixKind {
    /// Inserts only.
    InsertStorm,
    /// Deletes dominate; inserts refill the pools.
    DeleteHeavy,
    /// Balanced inserts, deletes, and order queries.
    Mixed,
}

impl MixKind {
    /// (insert, delete, order) weights.
    fn weights(self) -> (u32, u32, u32) {
        match self {
            MixKind::InsertStorm => (1, 0, 0),
            MixKind::DeleteHeavy => (2, 5, 3),
            MixKind::Mixed => (4, 2, 4),
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum ContentionKind {
    /// Each worker mutates around its own items.
    No,
    /// Every insert targets one shared anchor item.
    Max,
}

#[derive(Args)]
struct StressArgs {
    #[arg(long, default_value_t = 4)]
    workers: u32,
    /// Operations per worker.
    #[arg(long, default_value_t = 10_000)]
    ops: u64,
    /// Operation mix the workers run.
    #[arg(long, value_enum, default_value_t = MixKind::Mixed)]
    mix: MixKind,
    /// Insertion contention: no (spread) or max (one hot anchor).
    #[arg(long, value_enum, default_value_t = ContentionKind::No)]
    case: ContentionKind,
    /// Initial list size.
    #[arg(long, default_value_t = 10_000)]
    size: u64,
    /// Item pairs reserved for the continuous order validators.
    #[arg(long, default_value_t = 8)]
    pinned: u32,
    /// Wall-clock budget; overruns are reported as suspected deadlocks.
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Node-lock implementation: spin or blocking.
    #[arg(long, default_value = "spin")]
    lock: LockKind,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(4..=32))]
    capacity_bits: u32,
    /// Skip capturing and replay-checking relabel episode write logs.
    #[arg(long)]
    no_replay: bool,
}

/// Failures with their process exit status.
enum CliError {
    /// Invalid configuration (exit 2).
    Config(String),
    /// Runtime failure: I/O, spawn, label exhaustion (exit 1).
    Runtime(String),
    /// A correctness invariant did not hold (exit 3).
    Invariant(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Runtime(_) => ExitCode::from(1),
            CliError::Config(_) => ExitCode::from(2),
            CliError::Invariant(_) => ExitCode::from(3),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Invariant(m) => m,
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Op(OpError::Config(_)) | BenchError::Op(OpError::CapacityExceeded(_)) => {
                CliError::Config(e.to_string())
            }
            BenchError::Op(_) => CliError::Runtime(e.to_string()),
            BenchError::Check(_) => CliError::Invariant(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(format!("I/O error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Scale(a) => cmd_scale(a),
        Cmd::Stress(a) => cmd_stress(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

// ---- CSV and status plumbing ---------------------------------------------

/// Where CSV rows go, plus the stream for human-readable status (always the
/// one CSV does not use, so piped CSV stays machine-clean).
struct Output {
    csv: Box<dyn io::Write>,
    csv_is_stdout: bool,
}

impl Output {
    fn open(path: &Option<PathBuf>) -> Result<Output, CliError> {
        match path {
            Some(p) => {
                let file = OpenOptions::new().create(true).append(true).open(p)?;
                let fresh = file.metadata()?.len() == 0;
                let mut out = Output {
                    csv: Box::new(io::BufWriter::new(file)),
                    csv_is_stdout: false,
                };
                if fresh {
                    out.row(CSV_HEADER)?;
                }
                Ok(out)
            }
            None => {
                let mut out = Output {
                    csv: Box::new(io::stdout()),
                    csv_is_stdout: true,
                };
                out.row(CSV_HEADER)?;
                Ok(out)
            }
        }
    }

    fn row(&mut self, line: &str) -> Result<(), CliError> {
        writeln!(self.csv, "{line}")?;
        Ok(())
    }

    /// Human-readable line on the non-CSV stream.
    fn status(&self, line: &str) {
        if self.csv_is_stdout {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.csv.flush()?;
        Ok(())
    }
}

fn warn_about_oversubscription(out: &Output, workers: u32) {
    if let Ok(avail) = std::thread::available_parallelism() {
        if workers as usize > avail.get() {
            out.status(&format!(
                "note: {workers} workers on {avail} available hardware threads; \
                 timings will reflect oversubscription"
            ));
        }
    }
}

// ---- statistics ----------------------------------------------------------

/// Mean and 95% confidence half-width (normal approximation) of the
/// elapsed-millisecond samples.
fn mean_ci(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

// ---- subcommands ---------------------------------------------------------

fn build_spec(core: &CoreArgs, size: u64, workers: u32, lock: LockKind) -> WorkloadSpec {
    WorkloadSpec {
        experiment: core.experiment,
        case: core.case,
        initial_size: size,
        op_count: core.ops,
        workers,
        lock,
        seed: core.seed,
        reps: core.reps.max(1),
    }
}

/// Run all reps of one configuration, appending a CSV row per rep; returns
/// the elapsed-ms samples.
fn run_cell(out: &mut Output, cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let mut samples = Vec::with_capacity(cfg.spec.reps as usize);
    for rep in 0..cfg.spec.reps {
        let outcome: RunOutcome = execute(cfg)?;
        let record = RunRecord::new(cfg, rep, cfg.spec.seed, &outcome);
        out.row(&record.csv_row())?;
        samples.push(record.elapsed_ms);
    }
    Ok(samples)
}

fn cmd_run(a: RunArgs) -> Result<(), CliError> {
    let mut out = Output::open(&a.core.out)?;
    warn_about_oversubscription(&out, a.workers);
    let cfg = RunConfig {
        spec: build_spec(&a.core, a.size, a.workers, a.lock),
        capacity_bits: a.core.capacity_bits,
    };
    let samples = run_cell(&mut out, &cfg)?;
    let (mean, ci) = mean_ci(&samples);
    out.status(&format!(
        "{}/{} size {} ops {} workers {} lock {}: {:.3} ms ± {:.3} over {} reps",
        a.core.experiment,
        a.core.case,
        a.size,
        a.core.ops,
        a.workers,
        a.lock.name(),
        mean,
        ci,
        samples.len()
    ));
    out.finish()
}

fn cmd_sweep(a: SweepArgs) -> Result<(), CliError> {
    if a.workers.is_empty() || a.lock.is_empty() {
        return Err(CliError::Config(
            "sweep needs at least one worker count and one lock kind".into(),
        ));
    }
    let mut out = Output::open(&a.core.out)?;

    // The speedup baseline is the sequential spin cell; include it even when
    // the requested grid leaves it out.
    let mut cells: Vec<(LockKind, u32)> = Vec::new();
    if !(a.lock.contains(&LockKind::Spin) && a.workers.contains(&1)) {
        cells.push((LockKind::Spin, 1));
    }
    for &lock in &a.lock {
        for &workers in &a.workers {
            if !cells.contains(&(lock, workers)) {
                cells.push((lock, workers));
            }
        }
    }

    let mut stats: Vec<(LockKind, u32, f64, f64)> = Vec::new();
    for &(lock, workers) in &cells {
        warn_about_oversubscription(&out, workers);
        let cfg = RunConfig {
            spec: build_spec(&a.core, a.size, workers, lock),
            capacity_bits: a.core.capacity_bits,
        };
        let samples = run_cell(&mut out, &cfg)?;
        let (mean, ci) = mean_ci(&samples);
        let detail = format!(
            "cell workers={workers} lock={}: {mean:.3} ms ± {ci:.3}",
            lock.name()
        );
        out.status(&detail);
        stats.push((lock, workers, mean, ci));
    }

    let base = stats
        .iter()
        .find(|(lock, workers, ..)| *lock == LockKind::Spin && *workers == 1)
        .map(|&(_, _, mean, _)| mean)
        .expect("baseline cell always present");
    let mut table = String::new();
    let _ = writeln!(
        table,
        "\nsweep summary — {}/{}, size {}, ops {}, {} reps per cell",
        a.core.experiment, a.core.case, a.size, a.core.ops, a.core.reps
    );
    let _ = writeln!(
        table,
        "{:>8}  {:>9}  {:>12}  {:>12}  {:>8}",
        "lock", "workers", "mean ms", "ci95 ms", "speedup"
    );
    for &(lock, workers, mean, ci) in &stats {
        let speedup = if mean > 0.0 { base / mean } else { f64::NAN };
        let _ = writeln!(
            table,
            "{:>8}  {:>9}  {:>12.3}  {:>12.3}  {:>8.2}",
            lock.name(),
            workers,
            mean,
            ci,
            speedup
        );
    }
    out.status(table.trim_end());
    out.finish()
}

fn cmd_scale(a: ScaleArgs) -> Result<(), CliError> {
    let base_size = a.size[0];
    if base_size == 0 {
        return Err(CliError::Config("sizes must be positive".into()));
    }
    for pair in a.size.windows(2) {
        if pair[1] <= pair[0] {
            return Err(CliError::Config(format!(
                "sizes must be strictly ascending, got {} after {}",
                pair[1], pair[0]
            )));
        }
    }
    let mut out = Output::open(&a.core.out)?;
    warn_about_oversubscription(&out, a.workers);

    let base_spec = build_spec(&a.core, base_size, a.workers, a.lock);
    let mut stats: Vec<(u64, f64, f64)> = Vec::new();
    for &size in &a.size {
        if size % base_size != 0 {
            return Err(CliError::Config(format!(
                "size {size} is not a multiple of the smallest size {base_size}"
            )));
        }
        let spec = omlist::workload::scale(&base_spec, size / base_size)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let cfg = RunConfig {
            spec,
            capacity_bits: a.core.capacity_bits,
        };
        let samples = run_cell(&mut out, &cfg)?;
        let (mean, ci) = mean_ci(&samples);
        out.status(&format!(
            "size {size} (ops {}): {mean:.3} ms ± {ci:.3}",
            spec.op_count
        ));
        stats.push((size, mean, ci));
    }

    let base_mean = stats[0].1;
    let mut table = String::new();
    let _ = writeln!(
        table,
        "\nscale summary — {}/{}, workers {}, {} reps per size",
        a.core.experiment, a.core.case, a.workers, a.core.reps
    );
    let _ = writeln!(
        table,
        "{:>12}  {:>12}  {:>12}  {:>10}  {:>10}",
        "size", "mean ms", "ci95 ms", "time ratio", "size ratio"
    );
    for &(size, mean, ci) in &stats {
        let _ = writeln!(
            table,
            "{:>12}  {:>12.3}  {:>12.3}  {:>10.2}  {:>10.2}",
            size,
            mean,
            ci,
            if base_mean > 0.0 {
                mean / base_mean
            } else {
                f64::NAN
            },
            size as f64 / base_size as f64
        );
    }
    out.status(table.trim_end());
    out.finish()
}

fn cmd_stress(a: StressArgs) -> Result<(), CliError> {
    let list = OrderList::new(a.capacity_bits, a.size, a.lock)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let list = Arc::new(list);
    let (insert_weight, delete_weight, order_weight) = a.mix.weights();
    let plan = StressPlan {
        workers: a.workers,
        ops_per_worker: a.ops,
        insert_weight,
        delete_weight,
        order_weight,
        pinned_pairs: a.pinned,
        hot_insert: matches!(a.case, ContentionKind::Max),
        timeout: Duration::from_secs(a.timeout_secs),
        seed: a.seed,
        replay_writelogs: !a.no_replay,
    };
    match run_stress(&plan, &list) {
        Ok(report) => {
            println!(
                "PASS: {} workers × {} ops in {:?}; {} inserts, {} deletes, {} orders \
                 ({} redos), {} relabel episodes replayed, {} pinned-pair checks, \
                 {} items at quiescence",
                a.workers,
                a.ops,
                report.elapsed,
                report.totals.inserts,
                report.totals.deletes,
                report.totals.orders,
                report.totals.order_redos,
                report.episodes_replayed,
                report.pinned_checks,
                report.structure.live_items
            );
            Ok(())
        }
        Err(StressError::Plan(m)) => Err(CliError::Config(m)),
        Err(e) => {
            println!("FAIL: {e}");
            Err(CliError::Invariant(e.to_string()))
        }
    }
}
