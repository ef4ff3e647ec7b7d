//! Concurrent correctness harness.
//!
//! [`run_stress`] drives a list with an adversarial multi-worker mix while
//! dedicated validator threads continuously compare pinned pairs — items
//! whose relative order never changes during the run — and assert every
//! verdict. At quiescence it reconciles membership (initial ∪ inserted ∖
//! deleted against a full walk), re-checks parent relations (an item
//! inserted after a surviving parent must still follow it), runs the full
//! structure check, and optionally replays every relabel episode's write
//! log through [`replay_writelog`], which asserts that labels indicated the
//! true order after every single write.
//!
//! A run that exceeds its timeout is reported as a suspected deadlock with a
//! progress dump; the stuck worker threads are abandoned (the process is
//! expected to exit with the error).

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::list::{
    CheckError, CheckReport, EpisodeEvent, EpisodeLog, ItemRef, OrderList, OrderResult,
};
use crate::metrics::{bind_worker_slot, MetricsTotals};

/// Shape of one stress run.
#[derive(Clone, Copy, Debug)]
pub struct StressPlan {
    pub workers: u32,
    pub ops_per_worker: u64,
    /// Relative weights of the three operations in each worker's mix.
    pub insert_weight: u32,
    pub delete_weight: u32,
    pub order_weight: u32,
    /// Pairs of initial items reserved for the validators; never mutated.
    pub pinned_pairs: u32,
    /// All inserts target one shared anchor item (maximum label contention)
    /// instead of each worker's own pool.
    pub hot_insert: bool,
    /// Wall-clock budget; exceeding it is treated as a suspected deadlock.
    pub timeout: Duration,
    pub seed: u64,
    /// Capture every relabel episode's write log and replay-check it.
    pub replay_writelogs: bool,
}

impl Default for StressPlan {
    fn default() -> Self {
        StressPlan {
            workers: 4,
            ops_per_worker: 10_000,
            insert_weight: 4,
            delete_weight: 2,
            order_weight: 4,
            pinned_pairs: 8,
            hot_insert: false,
            timeout: Duration::from_secs(60),
            seed: 1,
            replay_writelogs: true,
        }
    }
}

/// Everything a clean stress run measured and verified.
#[derive(Clone, Copy, Debug)]
pub struct StressReport {
    pub elapsed: Duration,
    pub totals: MetricsTotals,
    pub structure: CheckReport,
    /// Order verdicts asserted by the validator threads.
    pub pinned_checks: u64,
    pub episodes_replayed: u64,
}

/// Why a stress run failed.
#[derive(Debug, thiserror::Error)]
pub enum StressError {
    #[error("invalid stress plan: {0}")]
    Plan(String),
    #[error("timed out after {elapsed:?} — suspected deadlock\n{dump}")]
    Timeout { elapsed: Duration, dump: String },
    #[error("wrong order verdict: {0}")]
    Verdict(String),
    #[error("membership mismatch at quiescence: {0}")]
    Membership(String),
    #[error("parent relation violated: {0}")]
    ParentOrder(String),
    #[error(transparent)]
    Structure(#[from] CheckError),
    #[error("write-log replay violation: {0}")]
    Replay(String),
}

struct WorkerOutcome {
    inserted: Vec<u32>,
    deleted: Vec<u32>,
    /// (parent, child) pairs for inserts whose parent was a real item.
    relations: Vec<(u32, u32)>,
}

/// Run the plan against a quiescent list. Counters are reset at the start;
/// the list is again quiescent on return unless the run timed out.
pub fn run_stress(plan: &StressPlan, list: &Arc<OrderList>) -> Result<StressReport, StressError> {
    let total_weight = plan.insert_weight + plan.delete_weight + plan.order_weight;
    if plan.workers == 0 {
        return Err(StressError::Plan("worker count must be at least 1".into()));
    }
    if total_weight == 0 {
        return Err(StressError::Plan("all mix weights are zero".into()));
    }
    if plan.timeout.is_zero() {
        return Err(StressError::Plan("timeout must be positive".into()));
    }

    let all = list.iter_live();
    let pair_count = (plan.pinned_pairs as usize).min(all.len() / 2);
    let pairs: Arc<Vec<(ItemRef, ItemRef)>> = Arc::new(
        (0..pair_count)
            .map(|k| (all[k], all[all.len() - 1 - k]))
            .collect(),
    );
    let mut pinned: BTreeSet<u32> = pairs
        .iter()
        .flat_map(|&(a, b)| [a.to_raw(), b.to_raw()])
        .collect();
    let hot = if plan.hot_insert {
        // One shared insertion anchor from the middle of the initial
        // population; reserved like the pinned items so it stays live.
        let Some(&anchor) = all.get(all.len() / 2) else {
            return Err(StressError::Plan(
                "hot insertion needs at least one initial item".into(),
            ));
        };
        pinned.insert(anchor.to_raw());
        Some(anchor)
    } else {
        None
    };
    let workable: Vec<ItemRef> = all
        .iter()
        .copied()
        .filter(|x| !pinned.contains(&x.to_raw()))
        .collect();

    let logs: Arc<Mutex<Vec<EpisodeLog>>> = Arc::new(Mutex::new(Vec::new()));
    if plan.replay_writelogs {
        let sink = Arc::clone(&logs);
        list.set_episode_observer(Some(Arc::new(move |log| sink.lock().unwrap().push(log))));
    }
    list.metrics().reset();

    let latch = Arc::new(FailureLatch::new());
    let done = Arc::new(AtomicU64::new(0));
    let progress: Arc<Vec<AtomicU64>> =
        Arc::new((0..plan.workers).map(|_| AtomicU64::new(0)).collect());
    let stop_validators = Arc::new(AtomicBool::new(false));

    let start = Instant::now();
    let mut worker_handles: Vec<JoinHandle<WorkerOutcome>> = Vec::new();
    for w in 0..plan.workers {
        let list = Arc::clone(list);
        let plan = *plan;
        let pool: Vec<ItemRef> = workable
            .iter()
            .copied()
            .skip(w as usize)
            .step_by(plan.workers as usize)
            .collect();
        let latch = Arc::clone(&latch);
        let done = Arc::clone(&done);
        let progress = Arc::clone(&progress);
        worker_handles.push(thread::spawn(move || {
            let out = stress_worker(&plan, &list, w, pool, hot, &latch, &progress);
            done.fetch_add(1, Ordering::Release);
            out
        }));
    }

    let mut validator_handles: Vec<JoinHandle<u64>> = Vec::new();
    let validator_count = if pairs.is_empty() { 0 } else { 2 };
    for v in 0..validator_count {
        let list = Arc::clone(list);
        let pairs = Arc::clone(&pairs);
        let stop = Arc::clone(&stop_validators);
        let latch = Arc::clone(&latch);
        let seed = plan.seed;
        let slot = plan.workers as usize + 1 + v;
        validator_handles.push(thread::spawn(move || {
            bind_worker_slot(slot);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(1_000_000 + v as u64);
            let mut checks = 0u64;
            let check_pair = |a: ItemRef, b: ItemRef| {
                let forward = list.order(a, b);
                if forward != OrderResult::Before {
                    latch.record(format!(
                        "pinned pair ({}, {}): expected Before, got {forward:?}",
                        a.to_raw(),
                        b.to_raw()
                    ));
                }
                let backward = list.order(b, a);
                if backward != OrderResult::NotBefore {
                    latch.record(format!(
                        "pinned pair ({}, {}) reversed: expected NotBefore, got {backward:?}",
                        b.to_raw(),
                        a.to_raw()
                    ));
                }
            };
            // Sweep every pair once before honoring the stop flag: on a
            // loaded machine the mutators can finish before this thread
            // first wakes, and each pair must still be asserted.
            for &(a, b) in pairs.iter() {
                check_pair(a, b);
                checks += 2;
            }
            while !stop.load(Ordering::Acquire) {
                let (a, b) = pairs[rng.gen_range(0..pairs.len())];
                check_pair(a, b);
                checks += 2;
                if checks % 128 == 0 {
                    // Leave room for the mutators on small machines.
                    thread::yield_now();
                }
            }
            checks
        }));
    }

    // Progress watch: workers signal completion; passing the deadline
    // without completion is reported as a suspected deadlock. The stuck
    // threads are not joined.
    while done.load(Ordering::Acquire) < plan.workers as u64 {
        if start.elapsed() > plan.timeout {
            stop_validators.store(true, Ordering::Release);
            list.set_episode_observer(None);
            let per_worker: Vec<u64> = progress.iter().map(|p| p.load(Ordering::Relaxed)).collect();
            let dump = format!(
                "worker progress (ops done of {} each): {:?}\ncounters: {:?}",
                plan.ops_per_worker,
                per_worker,
                list.metrics().aggregate()
            );
            return Err(StressError::Timeout {
                elapsed: start.elapsed(),
                dump,
            });
        }
        thread::sleep(Duration::from_millis(1));
    }
    stop_validators.store(true, Ordering::Release);

    let outcomes: Vec<WorkerOutcome> = worker_handles
        .into_iter()
        .map(|h| h.join().expect("stress worker panicked"))
        .collect();
    let pinned_checks: u64 = validator_handles
        .into_iter()
        .map(|h| h.join().expect("validator panicked"))
        .sum();
    let elapsed = start.elapsed();
    list.set_episode_observer(None);

    if let Some(first) = latch.first_witness() {
        return Err(StressError::Verdict(first));
    }

    // Membership: initial ∪ inserted ∖ deleted must equal a live walk.
    let mut expected: BTreeSet<u32> = all.iter().map(|x| x.to_raw()).collect();
    let mut inserted_total = 0u64;
    let mut deleted_total = 0u64;
    for out in &outcomes {
        inserted_total += out.inserted.len() as u64;
        deleted_total += out.deleted.len() as u64;
        for &id in &out.inserted {
            expected.insert(id);
        }
        for &id in &out.deleted {
            expected.remove(&id);
        }
    }
    let actual: BTreeSet<u32> = list.iter_live().iter().map(|x| x.to_raw()).collect();
    if expected != actual {
        let missing: Vec<u32> = expected.difference(&actual).take(8).copied().collect();
        let extra: Vec<u32> = actual.difference(&expected).take(8).copied().collect();
        return Err(StressError::Membership(format!(
            "expected {} live items, walked {}; missing {missing:?}, unexpected {extra:?}",
            expected.len(),
            actual.len()
        )));
    }

    let totals = list.metrics().aggregate();
    if totals.inserts != inserted_total || totals.deletes != deleted_total {
        return Err(StressError::Membership(format!(
            "counters disagree with worker logs: {}/{} inserts, {}/{} deletes",
            totals.inserts, inserted_total, totals.deletes, deleted_total
        )));
    }
    if totals.delete_fails != 0 || totals.order_fails != 0 {
        return Err(StressError::Membership(format!(
            "operations on worker-owned items failed: {} delete fails, {} order fails",
            totals.delete_fails, totals.order_fails
        )));
    }

    // Parent relations: a child inserted after a parent stays after it as
    // long as both live (relabels move labels, never relative order).
    for out in &outcomes {
        for &(parent, child) in &out.relations {
            let (p, c) = (ItemRef(parent), ItemRef(child));
            if list.is_live(p) && list.is_live(c) && list.order(p, c) != OrderResult::Before {
                return Err(StressError::ParentOrder(format!(
                    "item {child} was inserted after {parent} but no longer follows it"
                )));
            }
        }
    }

    let structure = list.check()?;

    let captured = std::mem::take(&mut *logs.lock().unwrap());
    for (i, log) in captured.iter().enumerate() {
        replay_writelog(log).map_err(|e| StressError::Replay(format!("episode {i}: {e}")))?;
    }

    Ok(StressReport {
        elapsed,
        totals,
        structure,
        pinned_checks,
        episodes_replayed: captured.len() as u64,
    })
}

fn stress_worker(
    plan: &StressPlan,
    list: &Arc<OrderList>,
    w: u32,
    mut pool: Vec<ItemRef>,
    hot: Option<ItemRef>,
    latch: &FailureLatch,
    progress: &[AtomicU64],
) -> WorkerOutcome {
    bind_worker_slot(w as usize + 1);
    let mut rng = ChaCha12Rng::seed_from_u64(plan.seed);
    rng.set_stream(w as u64 + 1);
    let total_weight = plan.insert_weight + plan.delete_weight + plan.order_weight;
    let mut out = WorkerOutcome {
        inserted: Vec::new(),
        deleted: Vec::new(),
        relations: Vec::new(),
    };
    for op in 0..plan.ops_per_worker {
        if latch.tripped() {
            break;
        }
        let roll = rng.gen_range(0..total_weight);
        if roll < plan.insert_weight || pool.is_empty() {
            // Insert (also the fallback when the pool has nothing to delete
            // or compare). Inserts target the shared hot anchor when set,
            // else this worker's pool; an empty pool inserts at the front.
            let parent = match hot {
                Some(anchor) => anchor,
                None if pool.is_empty() => list.head(),
                None => pool[rng.gen_range(0..pool.len())],
            };
            match list.insert_after(parent) {
                Ok(child) => {
                    out.inserted.push(child.to_raw());
                    if parent != list.head() {
                        out.relations.push((parent.to_raw(), child.to_raw()));
                    }
                    pool.push(child);
                }
                Err(e) => {
                    latch.record(format!("worker {w} insert failed: {e}"));
                }
            }
        } else if roll < plan.insert_weight + plan.delete_weight {
            let victim = pool.swap_remove(rng.gen_range(0..pool.len()));
            if list.delete(victim) {
                out.deleted.push(victim.to_raw());
            } else {
                latch.record(format!(
                    "worker {w}: delete of exclusively owned item {} failed",
                    victim.to_raw()
                ));
            }
        } else if pool.len() >= 2 {
            let i = rng.gen_range(0..pool.len());
            let mut j = rng.gen_range(0..pool.len() - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = (pool[i], pool[j]);
            let forward = list.order(a, b);
            let backward = list.order(b, a);
            if forward == OrderResult::Fail || backward == OrderResult::Fail {
                latch.record(format!(
                    "worker {w}: live owned pair ({}, {}) reported gone",
                    a.to_raw(),
                    b.to_raw()
                ));
            } else if (forward == OrderResult::Before) == (backward == OrderResult::Before) {
                latch.record(format!(
                    "worker {w}: order({}, {}) = {forward:?} and order({}, {}) = {backward:?}",
                    a.to_raw(),
                    b.to_raw(),
                    b.to_raw(),
                    a.to_raw()
                ));
            }
        }
        progress[w as usize].store(op + 1, Ordering::Relaxed);
    }
    out
}

/// First-failure latch shared by every stress thread: the flag lets the
/// mutators stop promptly; the witness list keeps every message so the
/// report can name the first violation observed.
struct FailureLatch {
    flag: AtomicBool,
    witnesses: Mutex<Vec<String>>,
}

impl FailureLatch {
    fn new() -> Self {
        FailureLatch {
            flag: AtomicBool::new(false),
            witnesses: Mutex::new(Vec::new()),
        }
    }

    fn record(&self, witness: String) {
        self.flag.store(true, Ordering::Release);
        self.witnesses.lock().unwrap().push(witness);
    }

    fn tripped(&self) -> bool {
        self.flag.load(Ordering::Relaxed)
    }

    fn first_witness(&self) -> Option<String> {
        self.witnesses.lock().unwrap().first().cloned()
    }
}

/// Replay one relabel episode's write log over its snapshot and verify that
/// after every single write, all labels written so far still indicate the
/// true list order of the affected nodes (bounded below and above by the
/// episode's untouched neighbors).
///
/// The first violating write is reported with the offending neighbor keys.
pub fn replay_writelog(log: &EpisodeLog) -> Result<(), String> {
    if log.top_chain.is_empty() {
        return Err("log has no top chain".into());
    }
    let g0 = log.top_chain[0].0;
    let mut top_order: Vec<u32> = log.top_chain.iter().map(|&(g, _)| g).collect();
    let mut top_label: HashMap<u32, u64> = log.top_chain.iter().copied().collect();
    if top_label.len() != top_order.len() {
        return Err("top chain repeats a group".into());
    }
    // (id, current group, current label) in fixed true bottom-list order;
    // moves and label writes never reorder items within the span.
    let mut span: Vec<(u32, u32, u32)> = log.members.iter().map(|&(id, lb)| (id, g0, lb)).collect();
    let index: HashMap<u32, usize> = span
        .iter()
        .enumerate()
        .map(|(i, &(id, _, _))| (id, i))
        .collect();
    if index.len() != span.len() {
        return Err("member list repeats an item".into());
    }

    let verify = |top_order: &[u32],
                  top_label: &HashMap<u32, u64>,
                  span: &[(u32, u32, u32)]|
     -> Result<(), String> {
        for pair in top_order.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if top_label[&a] >= top_label[&b] {
                return Err(format!(
                    "group labels out of order: {a} has {} ≥ {} of {b}",
                    top_label[&a], top_label[&b]
                ));
            }
        }
        let mut prev_key = log.lower_key;
        let mut prev_id = None::<u32>;
        for &(id, g, lb) in span {
            let Some(&gl) = top_label.get(&g) else {
                return Err(format!("item {id} in untracked group {g}"));
            };
            let key = (gl, lb);
            if key <= prev_key {
                let before = prev_id.map_or("lower bound".to_string(), |p| format!("item {p}"));
                return Err(format!(
                    "keys out of order: {before} has {prev_key:?}, item {id} has {key:?}"
                ));
            }
            prev_key = key;
            prev_id = Some(id);
        }
        let (uid, ug, ulb) = log.upper_item;
        let Some(&ugl) = top_label.get(&ug) else {
            return Err(format!("upper bound item {uid} in untracked group {ug}"));
        };
        if (ugl, ulb) <= prev_key {
            return Err(format!(
                "span reached {prev_key:?}, at or above the upper bound key {:?}",
                (ugl, ulb)
            ));
        }
        Ok(())
    };

    verify(&top_order, &top_label, &span).map_err(|e| format!("snapshot invalid: {e}"))?;

    for (step, event) in log.events.iter().enumerate() {
        match event {
            EpisodeEvent::RedistributeScope { scope, bound } => {
                let mut new_order = vec![g0];
                for &(g, lab) in scope {
                    if let Some(&old) = top_label.get(&g) {
                        if old != lab {
                            return Err(format!(
                                "write {step}: scope lists group {g} at label {lab} but it \
                                 was tracked at {old} — label moved outside the episode"
                            ));
                        }
                    }
                    new_order.push(g);
                    top_label.insert(g, lab);
                }
                let (bg, blab) = *bound;
                if let Some(&old) = top_label.get(&bg) {
                    if old != blab {
                        return Err(format!(
                            "write {step}: bound group {bg} at label {blab} was tracked at {old}"
                        ));
                    }
                }
                top_label.insert(bg, blab);
                // Tracked groups at or before the bound must all be covered
                // by the scope — they are consecutive from the episode group.
                if let Some(bi) = top_order.iter().position(|&g| g == bg) {
                    for &g in &top_order[..bi] {
                        if !new_order.contains(&g) {
                            return Err(format!(
                                "write {step}: tracked group {g} precedes the bound but is \
                                 not in the redistribution scope"
                            ));
                        }
                    }
                }
                let tail: Vec<u32> = top_order
                    .iter()
                    .copied()
                    .filter(|g| !new_order.contains(g) && *g != bg)
                    .collect();
                new_order.push(bg);
                new_order.extend(tail);
                top_order = new_order;
            }
            EpisodeEvent::GroupCreated {
                group,
                label,
                after,
            } => {
                let Some(pos) = top_order.iter().position(|g| g == after) else {
                    return Err(format!(
                        "write {step}: group created after untracked group {after}"
                    ));
                };
                if top_label.contains_key(group) {
                    return Err(format!("write {step}: group id {group} reused"));
                }
                top_order.insert(pos + 1, *group);
                top_label.insert(*group, *label);
            }
            EpisodeEvent::GroupLabel { group, label } => {
                if !top_label.contains_key(group) {
                    return Err(format!(
                        "write {step}: label write to untracked group {group}"
                    ));
                }
                top_label.insert(*group, *label);
            }
            EpisodeEvent::ItemMoved { item, group } => {
                let Some(&i) = index.get(item) else {
                    return Err(format!("write {step}: move of non-member item {item}"));
                };
                if !top_label.contains_key(group) {
                    return Err(format!(
                        "write {step}: item {item} moved to untracked group {group}"
                    ));
                }
                span[i].1 = *group;
            }
            EpisodeEvent::ItemLabel { item, label } => {
                let Some(&i) = index.get(item) else {
                    return Err(format!(
                        "write {step}: label write to non-member item {item}"
                    ));
                };
                span[i].2 = *label;
            }
        }
        verify(&top_order, &top_label, &span)
            .map_err(|e| format!("after write {step} ({event:?}): {e}"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sync::LockKind;

    #[test]
    fn clean_run_reconciles_everything() {
        let list = Arc::new(OrderList::new(14, 500, LockKind::Spin).unwrap());
        let plan = StressPlan {
            workers: 3,
            ops_per_worker: 2_000,
            timeout: Duration::from_secs(120),
            ..StressPlan::default()
        };
        let report = run_stress(&plan, &list).unwrap();
        assert!(report.pinned_checks > 0);
        assert_eq!(report.structure.live_items, list.len());
        assert_eq!(
            500 + report.totals.inserts - report.totals.deletes,
            list.len()
        );
        // The list is quiescent and reusable afterwards.
        run_stress(&plan, &list).unwrap();
    }

    #[test]
    fn insert_storm_replays_relabel_episodes() {
        let list = Arc::new(OrderList::new(12, 1, LockKind::Spin).unwrap());
        let plan = StressPlan {
            workers: 3,
            ops_per_worker: 1_000,
            insert_weight: 1,
            delete_weight: 0,
            order_weight: 0,
            pinned_pairs: 0,
            timeout: Duration::from_secs(120),
            ..StressPlan::default()
        };
        let report = run_stress(&plan, &list).unwrap();
        assert_eq!(report.totals.inserts, 3_000);
        assert!(
            report.episodes_replayed > 0,
            "a concentrated insert storm must trigger relabel episodes"
        );
    }

    #[test]
    fn hot_insertion_crowds_one_anchor_into_episodes() {
        let list = Arc::new(OrderList::new(12, 50, LockKind::Spin).unwrap());
        let plan = StressPlan {
            workers: 3,
            ops_per_worker: 800,
            hot_insert: true,
            timeout: Duration::from_secs(120),
            ..StressPlan::default()
        };
        let report = run_stress(&plan, &list).unwrap();
        assert!(
            report.episodes_replayed > 0,
            "all inserts hit one anchor, so its group must have split"
        );
    }

    #[test]
    fn bad_plans_are_rejected() {
        let list = Arc::new(OrderList::new(8, 4, LockKind::Spin).unwrap());
        for plan in [
            StressPlan {
                workers: 0,
                ..StressPlan::default()
            },
            StressPlan {
                insert_weight: 0,
                delete_weight: 0,
                order_weight: 0,
                ..StressPlan::default()
            },
            StressPlan {
                timeout: Duration::ZERO,
                ..StressPlan::default()
            },
        ] {
            assert!(matches!(
                run_stress(&plan, &list),
                Err(StressError::Plan(_))
            ));
        }
    }

    #[test]
    fn overrunning_the_deadline_reports_a_progress_dump() {
        let list = Arc::new(OrderList::new(22, 100, LockKind::Spin).unwrap());
        let plan = StressPlan {
            workers: 2,
            ops_per_worker: 300_000,
            timeout: Duration::from_millis(1),
            replay_writelogs: false,
            ..StressPlan::default()
        };
        match run_stress(&plan, &list) {
            Err(StressError::Timeout { dump, .. }) => {
                assert!(dump.contains("worker progress"));
            }
            other => panic!("expected a timeout, got {other:?}"),
        }
    }
}
