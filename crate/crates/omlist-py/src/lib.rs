//! Python bindings for the concurrent order-maintenance list.
//!
//! Exposes `OrderList` with its insert/delete/order operations, structure
//! check, and operation counters, plus the opaque `Item` handles they trade
//! in. All methods are safe to call from multiple Python threads: the
//! underlying structure is the concurrent one, and no binding holds state
//! outside it.

// The return-value glue `#[pymethods]` generates converts PyErr to itself;
// the lint cannot be scoped to the generated code, only to the crate.
#![allow(clippy::useless_conversion)]

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use omlist::{LockKind, OpError, OrderList, OrderResult};

/// Opaque handle to one list item. Handles stay valid after the item is
/// deleted (operations on a dead item report failure, they do not crash),
/// but belong to the list that created them.
#[pyclass(frozen, eq, hash, name = "Item")]
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct PyItem {
    raw: u32,
}

#[pymethods]
impl PyItem {
    /// Stable numeric identity of the handle.
    #[getter]
    fn id(&self) -> u32 {
        self.raw
    }

    fn __repr__(&self) -> String {
        format!("Item({})", self.raw)
    }
}

fn op_err(e: OpError) -> PyErr {
    match e {
        OpError::TargetGone => PyValueError::new_err(e.to_string()),
        OpError::Config(_) => PyValueError::new_err(e.to_string()),
        OpError::CapacityExceeded(_) | OpError::LabelSpaceExhausted => {
            PyRuntimeError::new_err(e.to_string())
        }
    }
}

fn parse_lock(lock: &str) -> PyResult<LockKind> {
    lock.parse().map_err(PyValueError::new_err)
}

/// Concurrent order-maintenance list: a total order over opaque items with
/// constant-time comparisons and parallel inserts and deletes.
#[pyclass(frozen, name = "OrderList")]
struct PyOrderList {
    inner: Arc<OrderList>,
}

impl PyOrderList {
    /// Resolve a handle against this list, rejecting foreign ones.
    fn resolve(&self, item: &PyItem) -> PyResult<omlist::ItemRef> {
        self.inner
            .item_from_raw(item.raw)
            .ok_or_else(|| PyValueError::new_err("item handle does not belong to this list"))
    }

    fn wrap(&self, item: omlist::ItemRef) -> PyItem {
        PyItem { raw: item.to_raw() }
    }
}

#[pymethods]
impl PyOrderList {
    /// Create a list able to hold `2**capacity_bits` items, pre-populated
    /// with `initial_count` items (one per group; `packed=True` fills each
    /// group to its split threshold instead). `lock` is "spin" or
    /// "blocking".
    #[new]
    #[pyo3(signature = (capacity_bits, initial_count, lock = "spin", packed = false))]
    fn new(capacity_bits: u32, initial_count: u64, lock: &str, packed: bool) -> PyResult<Self> {
        let kind = parse_lock(lock)?;
        let inner = if packed {
            OrderList::new_packed(capacity_bits, initial_count, kind)
        } else {
            OrderList::new(capacity_bits, initial_count, kind)
        }
        .map_err(op_err)?;
        Ok(PyOrderList {
            inner: Arc::new(inner),
        })
    }

    /// Head sentinel: insert after it to place an item first.
    fn head(&self) -> PyItem {
        self.wrap(self.inner.head())
    }

    /// Tail sentinel: every live item orders before it.
    fn tail(&self) -> PyItem {
        self.wrap(self.inner.tail())
    }

    /// Handle to the `i`-th initially created item, or None when out of
    /// range.
    fn initial_item(&self, i: u64) -> Option<PyItem> {
        self.inner.initial_item(i).map(|x| self.wrap(x))
    }

    /// Insert a new item immediately after `target` and return its handle.
    /// Raises ValueError if the target is dead, RuntimeError when the list
    /// is full or the label space cannot make room.
    fn insert_after(&self, py: Python<'_>, target: &PyItem) -> PyResult<PyItem> {
        let target = self.resolve(target)?;
        py.allow_threads(|| self.inner.insert_after(target))
            .map(|x| self.wrap(x))
            .map_err(op_err)
    }

    /// Delete the item. True when this call removed it; False when it was
    /// already gone (or is a sentinel, which cannot be deleted).
    fn delete(&self, py: Python<'_>, item: &PyItem) -> PyResult<bool> {
        let item = self.resolve(item)?;
        Ok(py.allow_threads(|| self.inner.delete(item)))
    }

    /// Does `a` precede `b`? True / False, or None when either operand was
    /// deleted. Takes no locks.
    fn precedes(&self, py: Python<'_>, a: &PyItem, b: &PyItem) -> PyResult<Option<bool>> {
        let (a, b) = (self.resolve(a)?, self.resolve(b)?);
        Ok(match py.allow_threads(|| self.inner.order(a, b)) {
            OrderResult::Before => Some(true),
            OrderResult::NotBefore => Some(false),
            OrderResult::Fail => None,
        })
    }

    /// The live item after `item` (clamps at the tail sentinel).
    fn next(&self, item: &PyItem) -> PyResult<PyItem> {
        Ok(self.wrap(self.inner.next(self.resolve(item)?)))
    }

    /// The live item before `item` (clamps at the head sentinel).
    fn prev(&self, item: &PyItem) -> PyResult<PyItem> {
        Ok(self.wrap(self.inner.prev(self.resolve(item)?)))
    }

    fn is_live(&self, item: &PyItem) -> PyResult<bool> {
        Ok(self.inner.is_live(self.resolve(item)?))
    }

    fn is_sentinel(&self, item: &PyItem) -> PyResult<bool> {
        Ok(self.inner.is_sentinel(self.resolve(item)?))
    }

    /// The item's (group_label, item_label) key; comparing keys
    /// lexicographically is comparing list positions.
    fn key_of(&self, item: &PyItem) -> PyResult<(u64, u32)> {
        Ok(self.inner.key_of(self.resolve(item)?))
    }

    /// Live items in list order (a snapshot walk; concurrent mutation may
    /// be partially reflected).
    fn items(&self) -> Vec<PyItem> {
        self.inner
            .iter_live()
            .into_iter()
            .map(|x| self.wrap(x))
            .collect()
    }

    /// Group labels in top-list order, sentinels included.
    fn top_labels(&self) -> Vec<u64> {
        self.inner.top_labels()
    }

    fn __len__(&self) -> usize {
        self.inner.len() as usize
    }

    /// Maximum live items: `2**capacity_bits`.
    fn capacity(&self) -> u64 {
        self.inner.capacity()
    }

    #[getter]
    fn capacity_bits(&self) -> u32 {
        self.inner.capacity_bits()
    }

    /// Lock implementation name: "spin" or "blocking".
    #[getter]
    fn lock(&self) -> &'static str {
        self.inner.lock_kind().name()
    }

    /// Walk the whole structure and verify every invariant (label order,
    /// link symmetry, group membership, counts). Returns
    /// {"items": ..., "groups": ..., "live": ...} on success; raises
    /// RuntimeError describing the first violation. Call at quiescence.
    fn check<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let report = self
            .inner
            .check()
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let d = PyDict::new_bound(py);
        d.set_item("items", report.items)?;
        d.set_item("groups", report.groups)?;
        d.set_item("live", report.live_items)?;
        Ok(d)
    }

    /// Aggregated operation counters since the last reset, keyed by name.
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let t = self.inner.metrics().aggregate();
        let d = PyDict::new_bound(py);
        d.set_item("inserts", t.inserts)?;
        d.set_item("deletes", t.deletes)?;
        d.set_item("orders", t.orders)?;
        d.set_item("relabels", t.relabels)?;
        d.set_item("lb_updates", t.lb_updates)?;
        d.set_item("lt_updates", t.lt_updates)?;
        d.set_item("order_redos", t.order_redos)?;
        d.set_item("order_fails", t.order_fails)?;
        d.set_item("delete_fails", t.delete_fails)?;
        d.set_item("lock_acquires", t.lock_acquires)?;
        Ok(d)
    }

    fn reset_metrics(&self) {
        self.inner.metrics().reset();
    }

    fn __repr__(&self) -> String {
        format!(
            "OrderList(len={}, capacity_bits={}, lock={:?})",
            self.inner.len(),
            self.inner.capacity_bits(),
            self.inner.lock_kind().name()
        )
    }
}

#[pymodule]
fn omlist_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOrderList>()?;
    m.add_class::<PyItem>()?;
    Ok(())
}
