//! Experiment execution and CSV records.
//!
//! One [`RunConfig`] describes a single measured run: an initial list is
//! bulk-built (untimed), any preparatory operations run (untimed — e.g. the
//! Order experiment's inserts), counters reset, and the measured phase runs
//! between a start barrier and the last worker's completion. The CLI wraps
//! this with rep loops and statistics; correctness suites call it directly
//! so benchmarks and tests measure exactly the same code path.

use std::sync::Barrier;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::list::{CheckError, CheckReport, ItemRef, OpError, OrderList};
use crate::metrics::{bind_worker_slot, MetricsTotals};
use crate::workload::{self, CaseKind, ExperimentKind, WorkloadSpec};

/// One measured run.
#[derive(Clone, Copy, Debug)]
pub struct RunConfig {
    pub spec: WorkloadSpec,
    /// Label-space capacity exponent (list capacity `2^bits`).
    pub capacity_bits: u32,
}

/// What a run produced.
#[derive(Clone, Copy, Debug)]
pub struct RunOutcome {
    /// Wall-clock time of the measured phase only.
    pub elapsed: Duration,
    /// Counters from the measured phase only.
    pub totals: MetricsTotals,
    /// Post-run full-structure scan (always executed).
    pub structure: CheckReport,
}

/// Why a run could not produce an outcome.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Op(#[from] OpError),
    /// The structure scan after the run found a violation.
    #[error("post-run structure check failed: {0}")]
    Check(#[from] CheckError),
}

/// Execute one run: build, prepare, measure, verify.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome, BenchError> {
    let spec = &cfg.spec;
    spec.validate()?;
    let capacity = 1u128 << cfg.capacity_bits;
    if spec.initial_size as u128 + spec.op_count as u128 > capacity {
        return Err(OpError::Config(format!(
            "initial size {} plus {} inserts exceeds capacity 2^{}",
            spec.initial_size, spec.op_count, cfg.capacity_bits
        ))
        .into());
    }

    // The measured list starts packed: groups filled to the post-split
    // density, as a long-lived list would be. A freshly constructed
    // one-item-per-group layout leaves every group ~16x more bottom-label
    // headroom than the structure ever recreates after a split, which
    // suppresses relabeling far below what any aged list exhibits.
    let list = OrderList::new_packed(cfg.capacity_bits, spec.initial_size, spec.lock)?;
    let streams = workload::generate(spec)?;
    let positions: Vec<Vec<ItemRef>> = streams
        .iter()
        .map(|s| {
            s.iter()
                .map(|&p| list.initial_item(p).expect("position inside initial size"))
                .collect()
        })
        .collect();
    drop(streams);

    let (elapsed, totals) = match spec.experiment {
        ExperimentKind::Insert => run_inserts(&list, &positions, false)?,
        ExperimentKind::Mixed => run_inserts(&list, &positions, true)?,
        ExperimentKind::Order => run_orders(&list, &positions)?,
        ExperimentKind::Delete => run_deletes(&list, spec, &positions)?,
    };
    let structure = list.check()?;
    Ok(RunOutcome {
        elapsed,
        totals,
        structure,
    })
}

/// First mutation error any worker hit, if any.
struct FirstError(Mutex<Option<OpError>>);

impl FirstError {
    fn new() -> Self {
        FirstError(Mutex::new(None))
    }

    fn set(&self, e: OpError) {
        let mut slot = self.0.lock().unwrap();
        slot.get_or_insert(e);
    }

    fn take(&self) -> Result<(), OpError> {
        match self.0.lock().unwrap().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Timed inserts; with `mixed`, each insert is followed by comparisons
/// against the ten items after the new one.
fn run_inserts(
    list: &OrderList,
    positions: &[Vec<ItemRef>],
    mixed: bool,
) -> Result<(Duration, MetricsTotals), BenchError> {
    list.metrics().reset();
    let barrier = Barrier::new(positions.len() + 1);
    let failure = FirstError::new();
    let elapsed = std::thread::scope(|s| {
        let handles: Vec<_> = positions
            .iter()
            .enumerate()
            .map(|(w, stream)| {
                let (list, barrier, failure) = (&list, &barrier, &failure);
                s.spawn(move || {
                    bind_worker_slot(w + 1);
                    barrier.wait();
                    for &pos in stream {
                        let y = match list.insert_after(pos) {
                            Ok(y) => y,
                            Err(e) => {
                                failure.set(e);
                                return;
                            }
                        };
                        if mixed {
                            let mut z = y;
                            for _ in 0..ExperimentKind::MIXED_ORDERS_PER_INSERT {
                                z = list.next(z);
                                list.order(y, z);
                            }
                        }
                    }
                })
            })
            .collect();
        // The clock must start before this thread trips the barrier: no
        // worker can pass it until every party arrives, so the window covers
        // all timed work even if this thread is descheduled at release.
        let start = Instant::now();
        barrier.wait();
        for h in handles {
            h.join().expect("insert worker panicked");
        }
        start.elapsed()
    });
    failure.take()?;
    Ok((elapsed, list.metrics().aggregate()))
}

/// Untimed inserts capturing each new item's successor, then timed
/// comparisons of every captured pair.
fn run_orders(
    list: &OrderList,
    positions: &[Vec<ItemRef>],
) -> Result<(Duration, MetricsTotals), BenchError> {
    let failure = FirstError::new();
    let pairs: Vec<Vec<(ItemRef, ItemRef)>> = std::thread::scope(|s| {
        let handles: Vec<_> = positions
            .iter()
            .enumerate()
            .map(|(w, stream)| {
                let (list, failure) = (&list, &failure);
                s.spawn(move || {
                    bind_worker_slot(w + 1);
                    let mut out = Vec::with_capacity(stream.len());
                    for &pos in stream {
                        match list.insert_after(pos) {
                            Ok(y) => out.push((y, list.next(y))),
                            Err(e) => {
                                failure.set(e);
                                break;
                            }
                        }
                    }
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("build worker panicked"))
            .collect()
    });
    failure.take()?;

    list.metrics().reset();
    let barrier = Barrier::new(pairs.len() + 1);
    let elapsed = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .iter()
            .enumerate()
            .map(|(w, stream)| {
                let (list, barrier) = (&list, &barrier);
                s.spawn(move || {
                    bind_worker_slot(w + 1);
                    barrier.wait();
                    for &(a, b) in stream {
                        list.order(a, b);
                    }
                })
            })
            .collect();
        let start = Instant::now();
        barrier.wait();
        for h in handles {
            h.join().expect("order worker panicked");
        }
        start.elapsed()
    });
    Ok((elapsed, list.metrics().aggregate()))
}

/// Untimed inserts, then timed deletion of every inserted item in a
/// seed-determined random order, split across the workers.
fn run_deletes(
    list: &OrderList,
    spec: &WorkloadSpec,
    positions: &[Vec<ItemRef>],
) -> Result<(Duration, MetricsTotals), BenchError> {
    let failure = FirstError::new();
    let per_worker: Vec<Vec<ItemRef>> = std::thread::scope(|s| {
        let handles: Vec<_> = positions
            .iter()
            .enumerate()
            .map(|(w, stream)| {
                let (list, failure) = (&list, &failure);
                s.spawn(move || {
                    bind_worker_slot(w + 1);
                    let mut out = Vec::with_capacity(stream.len());
                    for &pos in stream {
                        match list.insert_after(pos) {
                            Ok(y) => out.push(y),
                            Err(e) => {
                                failure.set(e);
                                break;
                            }
                        }
                    }
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("build worker panicked"))
            .collect()
    });
    failure.take()?;

    // Reassemble the global insert index space (workers own contiguous
    // blocks of it) and deal the deletion permutation back out in blocks.
    let children: Vec<ItemRef> = per_worker.concat();
    let m = children.len() as u64;
    let order = workload::delete_order(m, spec.seed);
    let workers = positions.len() as u64;
    let blocks: Vec<&[u64]> = (0..workers)
        .map(|w| {
            let lo = (w * m / workers) as usize;
            let hi = ((w + 1) * m / workers) as usize;
            &order[lo..hi]
        })
        .collect();

    list.metrics().reset();
    let barrier = Barrier::new(blocks.len() + 1);
    let elapsed = std::thread::scope(|s| {
        let handles: Vec<_> = blocks
            .iter()
            .enumerate()
            .map(|(w, block)| {
                let (list, barrier, children) = (&list, &barrier, &children);
                s.spawn(move || {
                    bind_worker_slot(w + 1);
                    barrier.wait();
                    for &idx in block.iter() {
                        list.delete(children[idx as usize]);
                    }
                })
            })
            .collect();
        let start = Instant::now();
        barrier.wait();
        for h in handles {
            h.join().expect("delete worker panicked");
        }
        start.elapsed()
    });
    Ok((elapsed, list.metrics().aggregate()))
}

/// Exact header of the CSV this crate emits, fields in record order.
pub const CSV_HEADER: &str = "experiment,case,workers,lock,rep,elapsed_ms,inserts,deletes,\
orders,relabels,lb_updates,lt_updates,order_redos,order_fails,seed";

/// One CSV row: a (config, rep) measurement.
#[derive(Clone, Copy, Debug)]
pub struct RunRecord {
    pub experiment: ExperimentKind,
    pub case: CaseKind,
    pub workers: u32,
    pub lock: crate::sync::LockKind,
    pub rep: u32,
    pub elapsed_ms: f64,
    pub totals: MetricsTotals,
    pub seed: u64,
}

impl RunRecord {
    pub fn new(cfg: &RunConfig, rep: u32, seed: u64, outcome: &RunOutcome) -> Self {
        RunRecord {
            experiment: cfg.spec.experiment,
            case: cfg.spec.case,
            workers: cfg.spec.workers,
            lock: cfg.spec.lock,
            rep,
            elapsed_ms: outcome.elapsed.as_secs_f64() * 1e3,
            totals: outcome.totals,
            seed,
        }
    }

    /// The record as one CSV line (no trailing newline).
    pub fn csv_row(&self) -> String {
        let t = &self.totals;
        format!(
            "{},{},{},{},{},{:.3},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.case,
            self.workers,
            self.lock.name(),
            self.rep,
            self.elapsed_ms,
            t.inserts,
            t.deletes,
            t.orders,
            t.relabels,
            t.lb_updates,
            t.lt_updates,
            t.order_redos,
            t.order_fails,
            self.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sync::LockKind;

    fn cfg(
        experiment: ExperimentKind,
        case: CaseKind,
        initial: u64,
        ops: u64,
        workers: u32,
        bits: u32,
    ) -> RunConfig {
        RunConfig {
            spec: WorkloadSpec {
                experiment,
                case,
                initial_size: initial,
                op_count: ops,
                workers,
                lock: LockKind::Spin,
                seed: 7,
                reps: 1,
            },
            capacity_bits: bits,
        }
    }

    #[test]
    fn insert_run_counts_only_the_timed_phase() {
        let out = execute(&cfg(ExperimentKind::Insert, CaseKind::No, 100, 100, 4, 9)).unwrap();
        assert_eq!(out.totals.inserts, 100);
        assert_eq!(out.totals.deletes, 0);
        assert_eq!(out.totals.orders, 0);
        assert_eq!(out.structure.live_items, 200);
    }

    #[test]
    fn order_run_times_a_pure_comparison_phase() {
        let out = execute(&cfg(ExperimentKind::Order, CaseKind::Few, 100, 200, 2, 9)).unwrap();
        // The build inserts happen before the reset; the timed phase only
        // compares — and comparisons take no locks at all.
        assert_eq!(out.totals.inserts, 0);
        assert_eq!(out.totals.orders, 200);
        assert_eq!(out.totals.order_fails, 0);
        assert_eq!(out.totals.lock_acquires, 0);
        assert_eq!(out.structure.live_items, 300);
    }

    #[test]
    fn delete_run_removes_every_inserted_item() {
        let out = execute(&cfg(ExperimentKind::Delete, CaseKind::No, 200, 200, 3, 9)).unwrap();
        assert_eq!(out.totals.inserts, 0);
        assert_eq!(out.totals.deletes, 200);
        assert_eq!(out.totals.delete_fails, 0);
        assert_eq!(out.structure.live_items, 200);
    }

    #[test]
    fn mixed_run_pairs_each_insert_with_ten_comparisons() {
        let out = execute(&cfg(ExperimentKind::Mixed, CaseKind::Max, 50, 60, 3, 9)).unwrap();
        assert_eq!(out.totals.inserts, 60);
        assert_eq!(out.totals.orders, 600);
        assert_eq!(out.structure.live_items, 110);
    }

    #[test]
    fn over_capacity_configs_are_refused() {
        let err = execute(&cfg(ExperimentKind::Insert, CaseKind::Few, 200, 100, 2, 8));
        assert!(matches!(err, Err(BenchError::Op(OpError::Config(_)))));
    }

    #[test]
    fn csv_rows_match_the_header_shape() {
        let config = cfg(ExperimentKind::Insert, CaseKind::Many, 20_000, 100, 2, 15);
        let out = execute(&config).unwrap();
        let row = RunRecord::new(&config, 3, 7, &out).csv_row();
        assert_eq!(
            row.split(',').count(),
            CSV_HEADER.split(',').count(),
            "row: {row}"
        );
        assert!(row.starts_with("insert,many,2,spin,3,"));
        assert!(row.ends_with(",7"));
    }
}
