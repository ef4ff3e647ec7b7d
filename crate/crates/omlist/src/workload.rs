//! Deterministic workload generation for the benchmark experiments.
//!
//! A workload is defined by an experiment type (what operation mix runs), a
//! position-skew case (how many distinct insertion positions the inserts
//! target), sizes, worker count, and a seed. Generation is a pure function
//! of the [`WorkloadSpec`]: the position pool is drawn from the seed alone,
//! and each worker's draw sequence comes from its own counter-mode RNG
//! stream, so rerunning a spec reproduces byte-identical streams.
//!
//! Position-count mapping at base scale (`op_count = initial_size = n`):
//! `No` → n distinct positions each used exactly once, `Few` → n/10,
//! `Many` → n/10⁴ (1,000 at the 10⁷ base scale), `Max` → a single position
//! at the middle of the list. [`scale`] multiplies sizes while preserving
//! each case's items-per-position density, so the pool grows with the
//! workload for `Few`/`Many`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::list::OpError;
use crate::sync::LockKind;

/// How many distinct insert positions the generated stream targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseKind {
    /// Every initial item is an insert position exactly once: no crowding,
    /// so a well-laid-out list never relabels.
    No,
    /// A tenth of the initial items are positions, drawn with replacement.
    Few,
    /// One position per ten thousand initial items (at least one).
    Many,
    /// All inserts pile onto the single middle position.
    Max,
}

impl CaseKind {
    pub const ALL: [CaseKind; 4] = [CaseKind::No, CaseKind::Few, CaseKind::Many, CaseKind::Max];

    /// Canonical lower-case token, as used by CLI flags and CSV rows.
    pub fn name(self) -> &'static str {
        match self {
            CaseKind::No => "no",
            CaseKind::Few => "few",
            CaseKind::Many => "many",
            CaseKind::Max => "max",
        }
    }

    /// Number of distinct insert positions for an initial size of `n`.
    pub fn position_count(self, n: u64) -> u64 {
        match self {
            CaseKind::No => n,
            CaseKind::Few => (n / 10).max(1),
            CaseKind::Many => (n / 10_000).max(1),
            CaseKind::Max => 1,
        }
    }
}

impl std::str::FromStr for CaseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no" => Ok(CaseKind::No),
            "few" => Ok(CaseKind::Few),
            "many" => Ok(CaseKind::Many),
            "max" => Ok(CaseKind::Max),
            other => Err(format!("unknown case {other:?} (no|few|many|max)")),
        }
    }
}

impl std::fmt::Display for CaseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which operation mix an experiment measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    /// Timed inserts at the case's positions.
    Insert,
    /// Untimed inserts, then timed comparisons of each inserted item with
    /// the successor captured at its insertion.
    Order,
    /// Untimed inserts, then timed deletion of every inserted item in a
    /// seed-determined random order.
    Delete,
    /// Timed inserts, each followed by comparisons against its ten
    /// successive items.
    Mixed,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Insert,
        ExperimentKind::Order,
        ExperimentKind::Delete,
        ExperimentKind::Mixed,
    ];

    /// Comparisons issued per insert in the Mixed experiment.
    pub const MIXED_ORDERS_PER_INSERT: u64 = 10;

    /// Canonical lower-case token, as used by CLI flags and CSV rows.
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Insert => "insert",
            ExperimentKind::Order => "order",
            ExperimentKind::Delete => "delete",
            ExperimentKind::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "insert" => Ok(ExperimentKind::Insert),
            "order" => Ok(ExperimentKind::Order),
            "delete" => Ok(ExperimentKind::Delete),
            "mixed" => Ok(ExperimentKind::Mixed),
            other => Err(format!(
                "unknown experiment {other:?} (insert|order|delete|mixed)"
            )),
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Full description of one benchmark configuration.
#[derive(Clone, Copy, Debug)]
pub struct WorkloadSpec {
    pub experiment: ExperimentKind,
    pub case: CaseKind,
    /// Items in the list before the measured phase.
    pub initial_size: u64,
    /// Operations in the measured phase (inserts for insert-driven
    /// experiments; the Order/Delete experiments derive their op streams
    /// from the inserts).
    pub op_count: u64,
    pub workers: u32,
    pub lock: LockKind,
    pub seed: u64,
    pub reps: u32,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), OpError> {
        if self.workers == 0 {
            return Err(OpError::Config("worker count must be at least 1".into()));
        }
        if self.initial_size == 0 {
            return Err(OpError::Config("initial size must be at least 1".into()));
        }
        if self.op_count < self.workers as u64 {
            return Err(OpError::Config(format!(
                "op count {} below worker count {}",
                self.op_count, self.workers
            )));
        }
        if self.case == CaseKind::No && self.op_count > self.initial_size {
            return Err(OpError::Config(format!(
                "the no-crowding case uses each of {} positions at most once; \
                 cannot emit {} inserts",
                self.initial_size, self.op_count
            )));
        }
        if self.reps == 0 {
            return Err(OpError::Config("rep count must be at least 1".into()));
        }
        Ok(())
    }
}

/// The distinct insert positions for a case, as indices into the initial
/// population, drawn from `seed` alone.
pub fn position_pool(case: CaseKind, initial_size: u64, seed: u64) -> Vec<u64> {
    let mut rng = rng_stream(seed, 0);
    match case {
        CaseKind::Max => vec![initial_size / 2],
        CaseKind::No => {
            let mut all: Vec<u64> = (0..initial_size).collect();
            all.shuffle(&mut rng);
            all
        }
        CaseKind::Few | CaseKind::Many => {
            // Independent uniform draws, duplicates allowed: a position
            // drawn twice receives twice the insert density, which is what
            // concentrates enough inserts on rare positions to exhaust
            // their label gaps at the Few scale.
            let target = case.position_count(initial_size) as usize;
            (0..target)
                .map(|_| rng.gen_range(0..initial_size))
                .collect()
        }
    }
}

/// Per-worker insert-position streams: worker `w` performs the stream's
/// inserts left to right, each targeting the initial item at the given
/// index. Deterministic in the [`WorkloadSpec`]; the split into workers is
/// contiguous so one worker at the same seed sees the whole sequence.
pub fn generate(spec: &WorkloadSpec) -> Result<Vec<Vec<u64>>, OpError> {
    spec.validate()?;
    let pool = position_pool(spec.case, spec.initial_size, spec.seed);
    let mut streams = Vec::with_capacity(spec.workers as usize);
    for w in 0..spec.workers as u64 {
        let lo = w * spec.op_count / spec.workers as u64;
        let hi = (w + 1) * spec.op_count / spec.workers as u64;
        let len = (hi - lo) as usize;
        let stream = match spec.case {
            // Each position exactly once: workers take contiguous slices of
            // the seeded permutation.
            CaseKind::No => pool[lo as usize..hi as usize].to_vec(),
            CaseKind::Max => vec![pool[0]; len],
            CaseKind::Few | CaseKind::Many => {
                let mut rng = rng_stream(spec.seed, w + 1);
                (0..len)
                    .map(|_| pool[rng.gen_range(0..pool.len())])
                    .collect()
            }
        };
        streams.push(stream);
    }
    Ok(streams)
}

/// Deletion order for the Delete experiment: a seed-determined permutation
/// of the insert indices `0..count`.
pub fn delete_order(count: u64, seed: u64) -> Vec<u64> {
    let mut order: Vec<u64> = (0..count).collect();
    order.shuffle(&mut rng_stream(seed, u64::MAX));
    order
}

/// Scale a spec's sizes by an integer factor, preserving each case's
/// items-per-position density (the position pool grows with the sizes).
pub fn scale(spec: &WorkloadSpec, factor: u64) -> Result<WorkloadSpec, OpError> {
    if factor == 0 {
        return Err(OpError::Config("scale factor must be at least 1".into()));
    }
    let initial = spec
        .initial_size
        .checked_mul(factor)
        .ok_or_else(|| OpError::Config("scaled initial size overflows".into()))?;
    let ops = spec
        .op_count
        .checked_mul(factor)
        .ok_or_else(|| OpError::Config("scaled op count overflows".into()))?;
    if initial > (1u64 << 32) || ops > (1u64 << 32) {
        return Err(OpError::Config(format!(
            "scaled size {initial} exceeds the 2^32 label-space ceiling"
        )));
    }
    Ok(WorkloadSpec {
        initial_size: initial,
        op_count: ops,
        ..*spec
    })
}

/// A ChaCha stream keyed by (seed, stream id): distinct ids give independent
/// deterministic sequences from the same seed.
fn rng_stream(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(experiment: ExperimentKind, case: CaseKind, n: u64, m: u64) -> WorkloadSpec {
        WorkloadSpec {
            experiment,
            case,
            initial_size: n,
            op_count: m,
            workers: 4,
            lock: LockKind::Spin,
            seed: 7,
            reps: 1,
        }
    }

    #[test]
    fn position_counts_match_the_case_table() {
        assert_eq!(CaseKind::No.position_count(10_000_000), 10_000_000);
        assert_eq!(CaseKind::Few.position_count(10_000_000), 1_000_000);
        assert_eq!(CaseKind::Many.position_count(10_000_000), 1_000);
        assert_eq!(CaseKind::Max.position_count(10_000_000), 1);
        assert_eq!(CaseKind::Many.position_count(100), 1);
    }

    #[test]
    fn no_case_uses_each_position_exactly_once() {
        let s = spec(ExperimentKind::Insert, CaseKind::No, 1000, 1000);
        let streams = generate(&s).unwrap();
        let mut seen: Vec<u64> = streams.concat();
        assert_eq!(seen.len(), 1000);
        seen.sort_unstable();
        assert_eq!(seen, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn max_case_targets_only_the_middle() {
        let s = spec(ExperimentKind::Insert, CaseKind::Max, 1000, 500);
        let streams = generate(&s).unwrap();
        assert!(streams.iter().flatten().all(|&p| p == 500));
        assert_eq!(streams.iter().map(Vec::len).sum::<usize>(), 500);
    }

    #[test]
    fn streams_are_deterministic_and_pool_sized() {
        let s = spec(ExperimentKind::Insert, CaseKind::Few, 10_000, 5_000);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        assert_eq!(a, b);
        let pool = position_pool(CaseKind::Few, 10_000, s.seed);
        assert_eq!(pool.len(), 1_000);
        assert!(pool.iter().all(|&p| p < 10_000));
        assert!(a.iter().flatten().all(|p| pool.contains(p)));
    }

    #[test]
    fn scaling_preserves_per_position_density() {
        let s = spec(
            ExperimentKind::Insert,
            CaseKind::Few,
            10_000_000,
            10_000_000,
        );
        let s2 = scale(&s, 2).unwrap();
        assert_eq!(s2.initial_size, 20_000_000);
        assert_eq!(CaseKind::Few.position_count(s2.initial_size), 2_000_000);
        let many = spec(
            ExperimentKind::Insert,
            CaseKind::Many,
            10_000_000,
            10_000_000,
        );
        let many2 = scale(&many, 2).unwrap();
        assert_eq!(CaseKind::Many.position_count(many2.initial_size), 2_000);
        let id = scale(&s, 1).unwrap();
        assert_eq!(id.initial_size, s.initial_size);
        assert_eq!(id.op_count, s.op_count);
        assert!(scale(&s, 1 << 30).is_err());
    }

    #[test]
    fn delete_order_is_a_permutation() {
        let order = delete_order(1000, 3);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..1000).collect::<Vec<_>>());
        assert_ne!(order, (0..1000).collect::<Vec<_>>());
        assert_eq!(order, delete_order(1000, 3));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec(ExperimentKind::Insert, CaseKind::No, 100, 200);
        assert!(s.validate().is_err());
        s.op_count = 100;
        assert!(s.validate().is_ok());
        s.workers = 0;
        assert!(s.validate().is_err());
    }
}
