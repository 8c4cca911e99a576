//! Monitor results and their diagnostics.

use serde::Serialize;

use crate::history::{Interval, Timestamp, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetFailure {
    /// More removes returned than adds were called.
    CountViolation,
    /// No pending add/remove could justify the required membership state.
    EnsureStateFailure,
}

/// Why a history was found unlinearizable. Values are reported under their
/// original names, before any renaming by differentiation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// A pop-empty that overlaps no window in which the stack may be empty.
    PopEmpty { interval: Interval },
    /// A stack sub-history with no extreme value and no internal opening.
    Residual { values: Vec<Value> },
    /// A value whose pop returned before its push was called.
    PoppedBeforePushed { value: Value },
    /// A value popped more often than it was pushed.
    ExcessPop { value: Value },
    /// Queue values where `inner` was enqueued and dequeued entirely while
    /// `outer` was surely inside the queue.
    CriticalPair { inner: Value, outer: Value },
    Set { value: Value, timestamp: Timestamp, reason: SetFailure },
    /// Exhaustive search found no legal linearization.
    NoLinearization,
    /// The saturated precedence order has a cycle through these operations.
    Cycle { operations: Vec<u64> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub linearizable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl Verdict {
    pub fn linearizable() -> Self {
        Verdict { linearizable: true, witness: None }
    }

    pub fn unlinearizable(witness: Witness) -> Self {
        Verdict { linearizable: false, witness: Some(witness) }
    }
}
