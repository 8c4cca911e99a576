//! History data model shared by every monitor.
//!
//! A [`History`] is a set of [`Operation`]s, each an [`Event`] together with
//! its call and return timestamps. All timestamps in one history are
//! distinct. Stack and queue histories are additionally expected to be
//! *differentiated* (every value pushed and popped at most once) before the
//! monitors look at them; [`differentiate`] establishes that.

mod format;
mod transform;

use std::fmt;

use serde::Serialize;

pub use format::{parse_history, parse_history_with_symbols, serialize_history, Format, ParseError};
pub use transform::{
    complete_history, differentiate, op_to_val, project, remove_overlapping_pairs, validate,
    AttributedValue, DifferentiateError, OverlapRemoval, ValueMap, Violation,
};

/// Abstract tick. The recorder maps monotonic-clock nanoseconds onto these.
pub type Timestamp = u64;

/// Canonical value domain for pushed/added elements.
pub type Value = i64;

/// Closed interval `[left, right]` on the timeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Interval {
    pub left: Timestamp,
    pub right: Timestamp,
}

impl Interval {
    pub fn new(left: Timestamp, right: Timestamp) -> Self {
        debug_assert!(left <= right, "interval [{left}, {right}] is reversed");
        Interval { left, right }
    }

    /// Closed-endpoint intersection: shared endpoints count.
    pub fn intersects(&self, other: &Interval) -> bool {
        self.left <= other.right && other.left <= self.right
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &Interval) -> bool {
        self.left <= other.left && other.right <= self.right
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.left, self.right)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Adt {
    Stack,
    Queue,
    Set,
    Multiset,
}

impl Adt {
    pub fn name(self) -> &'static str {
        match self {
            Adt::Stack => "stack",
            Adt::Queue => "queue",
            Adt::Set => "set",
            Adt::Multiset => "multiset",
        }
    }

    /// Stack and queue histories are checked through the value-centric view.
    pub fn is_container(self) -> bool {
        matches!(self, Adt::Stack | Adt::Queue)
    }
}

impl fmt::Display for Adt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Adt {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stack" => Ok(Adt::Stack),
            "queue" => Ok(Adt::Queue),
            "set" => Ok(Adt::Set),
            "multiset" => Ok(Adt::Multiset),
            other => Err(format!("unknown adt `{other}`")),
        }
    }
}

/// Result of an add or remove on a set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Fail,
}

/// What an operation did. Queue enqueue/dequeue are spelled `Push`/`Pop`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    Push(Value),
    Pop(Value),
    /// A pop that observed the empty stack.
    PopEmpty,
    Add(Value, Outcome),
    Remove(Value, Outcome),
    Contains(Value, bool),
}

impl Event {
    /// The element the event talks about; `None` for [`Event::PopEmpty`].
    pub fn value(&self) -> Option<Value> {
        match *self {
            Event::Push(v) | Event::Pop(v) => Some(v),
            Event::Add(v, _) | Event::Remove(v, _) | Event::Contains(v, _) => Some(v),
            Event::PopEmpty => None,
        }
    }

    pub fn legal_for(&self, adt: Adt) -> bool {
        matches!(
            (self, adt),
            (Event::Push(_) | Event::Pop(_), Adt::Stack | Adt::Queue)
                | (Event::PopEmpty, Adt::Stack)
                | (Event::Add(..) | Event::Remove(..) | Event::Contains(..), Adt::Set)
                | (Event::Add(_, Outcome::Ok) | Event::Remove(_, Outcome::Ok), Adt::Multiset)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Operation {
    pub id: u64,
    pub event: Event,
    pub call: Timestamp,
    pub ret: Timestamp,
}

impl Operation {
    pub fn new(id: u64, event: Event, call: Timestamp, ret: Timestamp) -> Self {
        Operation { id, event, call, ret }
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.call, self.ret)
    }

    /// Real-time precedence: `self` returned before `other` was called.
    pub fn precedes(&self, other: &Operation) -> bool {
        self.ret < other.call
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct History {
    pub adt: Adt,
    pub operations: Vec<Operation>,
}

impl History {
    pub fn new(adt: Adt, operations: Vec<Operation>) -> Self {
        History { adt, operations }
    }

    pub fn empty(adt: Adt) -> Self {
        History { adt, operations: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.operations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operations.is_empty()
    }

    /// Largest timestamp present, if any.
    pub fn max_timestamp(&self) -> Option<Timestamp> {
        self.operations.iter().map(|op| op.ret.max(op.call)).max()
    }

    /// `[min call, max return]` over all operations.
    pub fn span(&self) -> Option<Interval> {
        let lo = self.operations.iter().map(|op| op.call).min()?;
        let hi = self.operations.iter().map(|op| op.ret).max()?;
        Some(Interval::new(lo, hi))
    }

    /// Next unused operation id.
    pub fn next_id(&self) -> u64 {
        self.operations.iter().map(|op| op.id + 1).max().unwrap_or(0)
    }

    /// Renumbers timestamps to `0..2n` preserving their relative order.
    pub fn compact_timestamps(&mut self) {
        let mut points: Vec<Timestamp> = self
            .operations
            .iter()
            .flat_map(|op| [op.call, op.ret])
            .collect();
        points.sort_unstable();
        points.dedup();
        let rank = |t: Timestamp| points.binary_search(&t).expect("timestamp present") as Timestamp;
        for op in &mut self.operations {
            op.call = rank(op.call);
            op.ret = rank(op.ret);
        }
    }
}
