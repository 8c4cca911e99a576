//! Validation and preprocessing passes over histories.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use super::{Event, History, Interval, Operation, Timestamp, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateTimestamp(Timestamp),
    DuplicateId(u64),
    CallNotBeforeReturn { id: u64, call: Timestamp, ret: Timestamp },
    IllegalEvent { id: u64 },
    /// Stack/queue: a pop of a value that is never pushed.
    UnmatchedPop(Value),
    /// Stack/queue: a value pushed more than once.
    DuplicatePush(Value),
    /// Stack/queue: a value popped more than once.
    DuplicatePop(Value),
}

impl Violation {
    /// Structural violations make the input malformed. The rest describe
    /// value reuse or mismatches, which the monitors handle themselves.
    pub fn is_structural(&self) -> bool {
        matches!(
            self,
            Violation::DuplicateTimestamp(_)
                | Violation::DuplicateId(_)
                | Violation::CallNotBeforeReturn { .. }
                | Violation::IllegalEvent { .. }
        )
    }
}

/// Lists every broken invariant; empty iff the history is well formed and,
/// for stacks and queues, differentiated with no pop of an unpushed value.
pub fn validate(h: &History) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut seen_ts: HashMap<Timestamp, usize> = HashMap::new();
    for op in &h.operations {
        *seen_ts.entry(op.call).or_default() += 1;
        *seen_ts.entry(op.ret).or_default() += 1;
    }
    let mut dup_ts: Vec<Timestamp> = seen_ts
        .into_iter()
        .filter(|&(_, n)| n > 1)
        .map(|(t, _)| t)
        .collect();
    dup_ts.sort_unstable();
    out.extend(dup_ts.into_iter().map(Violation::DuplicateTimestamp));

    let mut ids = BTreeSet::new();
    let mut dup_ids = BTreeSet::new();
    for op in &h.operations {
        if !ids.insert(op.id) {
            dup_ids.insert(op.id);
        }
    }
    out.extend(dup_ids.into_iter().map(Violation::DuplicateId));

    for op in &h.operations {
        // Zero-length calls (call == ret) cannot occur with distinct timestamps
        // and are reported as a timestamp duplicate, not here.
        if op.call > op.ret {
            out.push(Violation::CallNotBeforeReturn { id: op.id, call: op.call, ret: op.ret });
        }
        if !op.event.legal_for(h.adt) {
            out.push(Violation::IllegalEvent { id: op.id });
        }
    }

    if h.adt.is_container() {
        let mut pushes: BTreeMap<Value, usize> = BTreeMap::new();
        let mut pops: BTreeMap<Value, usize> = BTreeMap::new();
        for op in &h.operations {
            match op.event {
                Event::Push(v) => *pushes.entry(v).or_default() += 1,
                Event::Pop(v) => *pops.entry(v).or_default() += 1,
                _ => {}
            }
        }
        for (&v, &n) in &pushes {
            if n > 1 {
                out.push(Violation::DuplicatePush(v));
            }
        }
        for (&v, &n) in &pops {
            if !pushes.contains_key(&v) {
                out.push(Violation::UnmatchedPop(v));
            } else if n > 1 {
                out.push(Violation::DuplicatePop(v));
            }
        }
    }
    out
}

/// Appends one pop per unmatched push. With `M` the largest timestamp and
/// `k` unmatched pushes, the i-th added pop spans `[M+i, M+k+i]`, so all
/// added pops overlap each other and follow everything else.
pub fn complete_history(h: &History) -> History {
    let mut balance: HashMap<Value, i64> = HashMap::new();
    for op in &h.operations {
        match op.event {
            Event::Push(v) => *balance.entry(v).or_default() += 1,
            Event::Pop(v) => *balance.entry(v).or_default() -= 1,
            _ => {}
        }
    }
    let mut pending: Vec<&Operation> = h
        .operations
        .iter()
        .filter(|op| matches!(op.event, Event::Push(_)))
        .collect();
    pending.sort_by_key(|op| op.call);
    // With reused values, the earliest pushes count as matched.
    let mut unmatched = Vec::new();
    let mut skip: HashMap<Value, i64> = HashMap::new();
    for op in pending.into_iter().rev() {
        let v = op.event.value().expect("push carries a value");
        let extra = balance.get(&v).copied().unwrap_or(0);
        let taken = skip.entry(v).or_default();
        if *taken < extra {
            *taken += 1;
            unmatched.push(v);
        }
    }
    unmatched.reverse();

    let mut out = h.clone();
    let Some(max) = h.max_timestamp() else {
        return out;
    };
    let k = unmatched.len() as Timestamp;
    for (id, (i, v)) in (h.next_id()..).zip(unmatched.into_iter().enumerate()) {
        let i = i as Timestamp + 1;
        out.operations.push(Operation::new(id, Event::Pop(v), max + i, max + k + i));
    }
    out
}

/// Result of dropping same-value overlaps from a matched stack/queue history.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlapRemoval {
    pub history: History,
    pub removed: Vec<Value>,
    /// Some value whose pop returned before its push was called.
    pub popped_before_pushed: Option<Value>,
}

/// Removes every value whose push and pop intervals intersect. A value
/// popped strictly before being pushed is reported instead of removed.
pub fn remove_overlapping_pairs(h: &History) -> OverlapRemoval {
    let mut push_of: HashMap<Value, Interval> = HashMap::new();
    let mut pop_of: HashMap<Value, Interval> = HashMap::new();
    for op in &h.operations {
        match op.event {
            Event::Push(v) => {
                push_of.insert(v, op.interval());
            }
            Event::Pop(v) => {
                pop_of.insert(v, op.interval());
            }
            _ => {}
        }
    }
    let mut drop = BTreeSet::new();
    let mut popped_before_pushed = None;
    for (v, push) in &push_of {
        let Some(pop) = pop_of.get(v) else { continue };
        if pop.right < push.left {
            popped_before_pushed = Some(popped_before_pushed.map_or(*v, |p: Value| p.min(*v)));
        } else if push.intersects(pop) {
            drop.insert(*v);
        }
    }
    let history = History::new(
        h.adt,
        h.operations
            .iter()
            .filter(|op| op.event.value().is_none_or(|v| !drop.contains(&v)))
            .copied()
            .collect(),
    );
    OverlapRemoval { history, removed: drop.into_iter().collect(), popped_before_pushed }
}

/// Maps each renamed value back to `(original value, occurrence index)`.
pub type ValueMap = BTreeMap<Value, (Value, usize)>;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DifferentiateError {
    #[error("value {value} is popped more often than it is pushed")]
    ExcessPops { value: Value },
}

/// Renames reused stack/queue values so every value is pushed and popped at
/// most once. The j-th push of `v` is paired with the j-th pop of `v`, both
/// in call order. The first occurrence keeps its name; later ones get fresh
/// integers above every value in the history.
pub fn differentiate(h: &History) -> Result<(History, ValueMap), DifferentiateError> {
    let mut map = ValueMap::new();
    if !h.adt.is_container() {
        return Ok((h.clone(), map));
    }
    let mut order: Vec<usize> = (0..h.len()).collect();
    order.sort_by_key(|&i| h.operations[i].call);

    let mut next_fresh = h
        .operations
        .iter()
        .filter_map(|op| op.event.value())
        .max()
        .map_or(0, |m| m + 1);
    // names[v][j] is the name given to the j-th occurrence of v.
    let mut names: HashMap<Value, Vec<Value>> = HashMap::new();
    let mut push_count: HashMap<Value, usize> = HashMap::new();
    let mut pop_count: HashMap<Value, usize> = HashMap::new();
    let mut out = h.clone();

    let mut name_of = |v: Value, j: usize, map: &mut ValueMap| -> Value {
        let list = names.entry(v).or_default();
        while list.len() <= j {
            let name = if list.is_empty() {
                v
            } else {
                let f = next_fresh;
                next_fresh += 1;
                f
            };
            map.insert(name, (v, list.len()));
            list.push(name);
        }
        list[j]
    };

    for &i in &order {
        let op = &mut out.operations[i];
        match op.event {
            Event::Push(v) => {
                let j = push_count.entry(v).or_default();
                op.event = Event::Push(name_of(v, *j, &mut map));
                *j += 1;
            }
            Event::Pop(v) => {
                let j = pop_count.entry(v).or_default();
                op.event = Event::Pop(name_of(v, *j, &mut map));
                *j += 1;
            }
            _ => {}
        }
    }
    for (&v, &pops) in &pop_count {
        if pops > push_count.get(&v).copied().unwrap_or(0) {
            return Err(DifferentiateError::ExcessPops { value: v });
        }
    }
    Ok((out, map))
}

/// Keeps the operations on the given values; pop-empties survive only when
/// `keep_pop_empty` is set.
pub fn project(h: &History, values: &BTreeSet<Value>, keep_pop_empty: bool) -> History {
    History::new(
        h.adt,
        h.operations
            .iter()
            .filter(|op| match op.event.value() {
                Some(v) => values.contains(&v),
                None => keep_pop_empty,
            })
            .copied()
            .collect(),
    )
}

/// A stack/queue value with the timestamps of its push and its pop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct AttributedValue {
    pub value: Value,
    pub push_call: Timestamp,
    pub push_ret: Timestamp,
    pub pop_call: Timestamp,
    pub pop_ret: Timestamp,
}

impl AttributedValue {
    pub fn new(value: Value, push: (Timestamp, Timestamp), pop: (Timestamp, Timestamp)) -> Self {
        AttributedValue { value, push_call: push.0, push_ret: push.1, pop_call: pop.0, pop_ret: pop.1 }
    }

    pub fn push(&self) -> Interval {
        Interval::new(self.push_call, self.push_ret)
    }

    pub fn pop(&self) -> Interval {
        Interval::new(self.pop_call, self.pop_ret)
    }

    /// Window in which the value is surely stored; absent when push and pop
    /// overlap.
    pub fn inner(&self) -> Option<Interval> {
        (self.push_ret <= self.pop_call).then(|| Interval::new(self.push_ret, self.pop_call))
    }

    /// From the push call to the pop return.
    pub fn total(&self) -> Interval {
        Interval::new(self.push_call, self.pop_ret)
    }
}

/// Groups a differentiated, matched history by value, ordered by push call.
/// Pop-empties and values missing either half are skipped.
pub fn op_to_val(h: &History) -> Vec<AttributedValue> {
    let mut pushes: HashMap<Value, (Timestamp, Timestamp)> = HashMap::new();
    let mut pops: HashMap<Value, (Timestamp, Timestamp)> = HashMap::new();
    for op in &h.operations {
        match op.event {
            Event::Push(v) => {
                pushes.insert(v, (op.call, op.ret));
            }
            Event::Pop(v) => {
                pops.insert(v, (op.call, op.ret));
            }
            _ => {}
        }
    }
    let mut vals: Vec<AttributedValue> = pushes
        .into_iter()
        .filter_map(|(v, push)| pops.get(&v).map(|&pop| AttributedValue::new(v, push, pop)))
        .collect();
    vals.sort_by_key(|a| a.push_call);
    vals
}
