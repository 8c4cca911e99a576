//! Linear-time set and multiset monitors.
//!
//! Both consume calls and returns in timestamp order and keep a few
//! counters per value. Multisets only need to check that returned removes
//! never outnumber called adds. Sets additionally track the membership
//! state of each value and spend pending adds/removes as credits whenever a
//! return needs the state flipped.
//!
//! A credit records the time it was granted. Only an operation already
//! running at that time may later claim it on return; it takes the earliest
//! such credit.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::history::{Adt, Event, History, Outcome, Timestamp, Value};
use crate::verdict::{SetFailure, Verdict, Witness};

/// Adds or removes seen by one value.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Counter {
    /// Called and not yet returned.
    pub active: u64,
    /// Grant times of credits: running operations placed in the
    /// linearization ahead of their return, not yet claimed.
    pub linearized: BTreeSet<Timestamp>,
}

impl Counter {
    /// Claims the earliest credit granted after `call`.
    fn claim(&mut self, call: Timestamp) -> bool {
        match self.linearized.range(call + 1..).next().copied() {
            Some(g) => self.linearized.remove(&g),
            None => false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SetValueState {
    pub adds: Counter,
    pub removes: Counter,
    /// Membership queries whose answer disagreed with the state at their
    /// call and which have not seen a state change since.
    pub pending: HashSet<u64>,
    /// `None` until the first flip. Treated as absent.
    pub state: Option<bool>,
}

impl SetValueState {
    fn is(&self, q: bool) -> bool {
        self.state.unwrap_or(false) == q
    }

    fn set(&mut self, q: bool) {
        self.pending.clear();
        self.state = Some(q);
    }
}

/// Makes the value's state `q` at time `now`, linearizing one running add
/// (for `true`) or remove (for `false`) if it is not already. Fails when
/// every running one is already spoken for.
pub fn ensure_state(st: &mut SetValueState, q: bool, now: Timestamp) -> bool {
    if st.is(q) {
        return true;
    }
    let credit = if q { &mut st.adds } else { &mut st.removes };
    credit.linearized.insert(now);
    if credit.active < credit.linearized.len() as u64 {
        return false;
    }
    st.set(q);
    true
}

/// Rewrites failing adds as `contains(v) = true` and failing removes as
/// `contains(v) = false`.
pub fn normalize_failing_ops(h: &History) -> History {
    let mut out = h.clone();
    for op in &mut out.operations {
        op.event = match op.event {
            Event::Add(v, Outcome::Fail) => Event::Contains(v, true),
            Event::Remove(v, Outcome::Fail) => Event::Contains(v, false),
            e => e,
        };
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Remove,
    Contains,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RetResult {
    Outcome(Outcome),
    Answer(bool),
}

/// One line of an event stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamRecord {
    Call { id: u64, kind: OpKind, value: Value, ts: Timestamp },
    Ret { id: u64, ts: Timestamp, result: Option<RetResult> },
}

impl StreamRecord {
    pub fn ts(&self) -> Timestamp {
        match *self {
            StreamRecord::Call { ts, .. } | StreamRecord::Ret { ts, .. } => ts,
        }
    }

    /// Parses `call <id> <kind> <value> <ts>` or `ret <id> <ts> [<result>]`.
    /// Blank and comment lines give `None`.
    pub fn parse(line: &str) -> Result<Option<StreamRecord>, String> {
        let body = line.split('#').next().unwrap_or("");
        let t: Vec<&str> = body.split_whitespace().collect();
        let num = |s: &str| s.parse::<u64>().map_err(|_| format!("bad number `{s}`"));
        match t.as_slice() {
            [] => Ok(None),
            ["call", id, kind, value, ts] => {
                let kind = match *kind {
                    "add" => OpKind::Add,
                    "remove" => OpKind::Remove,
                    "contains" => OpKind::Contains,
                    k => return Err(format!("unknown kind `{k}`")),
                };
                let value = value.parse().map_err(|_| format!("bad value `{value}`"))?;
                Ok(Some(StreamRecord::Call { id: num(id)?, kind, value, ts: num(ts)? }))
            }
            ["ret", id, ts, rest @ ..] if rest.len() <= 1 => {
                let result = match rest.first().copied() {
                    None => None,
                    Some("ok") => Some(RetResult::Outcome(Outcome::Ok)),
                    Some("fail") => Some(RetResult::Outcome(Outcome::Fail)),
                    Some("true") => Some(RetResult::Answer(true)),
                    Some("false") => Some(RetResult::Answer(false)),
                    Some(r) => return Err(format!("bad result `{r}`")),
                };
                Ok(Some(StreamRecord::Ret { id: num(id)?, ts: num(ts)?, result }))
            }
            _ => Err(format!("malformed record `{}`", body.trim())),
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum StreamError {
    #[error("timestamp {ts} is not after the previous record")]
    OutOfOrder { ts: Timestamp },
    #[error("operation id {0} called twice")]
    DuplicateCall(u64),
    #[error("return for operation {0} without a call")]
    ReturnWithoutCall(u64),
    #[error("return for operation {0} lacks a valid result")]
    BadResult(u64),
    #[error("operation {0} never returned")]
    MissingReturn(u64),
    #[error("{0} is not supported on a multiset")]
    Unsupported(&'static str),
}

/// Converts a history into its timestamp-ordered call/return stream.
pub fn history_to_stream(h: &History) -> Vec<StreamRecord> {
    let mut out = Vec::with_capacity(2 * h.len());
    for op in &h.operations {
        let (kind, value, result) = match op.event {
            Event::Add(v, o) => (OpKind::Add, v, RetResult::Outcome(o)),
            Event::Remove(v, o) => (OpKind::Remove, v, RetResult::Outcome(o)),
            Event::Contains(v, a) => (OpKind::Contains, v, RetResult::Answer(a)),
            // Rejected by validation for sets and multisets.
            Event::Push(_) | Event::Pop(_) | Event::PopEmpty => continue,
        };
        out.push(StreamRecord::Call { id: op.id, kind, value, ts: op.call });
        out.push(StreamRecord::Ret { id: op.id, ts: op.ret, result: Some(result) });
    }
    out.sort_by_key(StreamRecord::ts);
    out
}

/// Online multiset monitor.
#[derive(Debug, Default)]
pub struct MultisetMonitor {
    /// Per value: called adds, returned removes.
    counts: HashMap<Value, (u64, u64)>,
    open: HashMap<u64, (OpKind, Value)>,
    last_ts: Option<Timestamp>,
    violation: Option<Witness>,
    work: u64,
}

impl MultisetMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, rec: StreamRecord) -> Result<(), StreamError> {
        check_order(&mut self.last_ts, rec.ts())?;
        self.work += 1;
        match rec {
            StreamRecord::Call { id, kind, value, .. } => {
                if kind == OpKind::Contains {
                    return Err(StreamError::Unsupported("contains"));
                }
                if self.open.insert(id, (kind, value)).is_some() {
                    return Err(StreamError::DuplicateCall(id));
                }
                if kind == OpKind::Add {
                    self.counts.entry(value).or_default().0 += 1;
                }
            }
            StreamRecord::Ret { id, ts, result } => {
                let (kind, value) = self.open.remove(&id).ok_or(StreamError::ReturnWithoutCall(id))?;
                match result {
                    None | Some(RetResult::Outcome(Outcome::Ok)) => {}
                    Some(RetResult::Outcome(Outcome::Fail)) => {
                        return Err(StreamError::Unsupported("a failing operation"))
                    }
                    Some(RetResult::Answer(_)) => return Err(StreamError::BadResult(id)),
                }
                if kind == OpKind::Remove {
                    let c = self.counts.entry(value).or_default();
                    c.1 += 1;
                    if c.1 > c.0 && self.violation.is_none() {
                        self.violation = Some(Witness::Set {
                            value,
                            timestamp: ts,
                            reason: SetFailure::CountViolation,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether a violation has been seen so far.
    pub fn violation(&self) -> Option<&Witness> {
        self.violation.as_ref()
    }

    pub fn work(&self) -> u64 {
        self.work
    }

    pub fn finish(self) -> Result<Verdict, StreamError> {
        if let Some(w) = self.violation {
            return Ok(Verdict::unlinearizable(w));
        }
        match self.open.keys().min() {
            Some(&id) => Err(StreamError::MissingReturn(id)),
            None => Ok(Verdict::linearizable()),
        }
    }
}

/// Online set monitor. A call is held back until its return arrives, since
/// a failing add or remove acts as a membership query.
#[derive(Debug, Default)]
pub struct SetMonitor {
    values: HashMap<Value, SetValueState>,
    /// Calls not yet returned: kind, value, call time, result once known.
    open: HashMap<u64, (OpKind, Value, Timestamp, Option<RetResult>)>,
    /// Records waiting for an earlier call's result.
    backlog: VecDeque<StreamRecord>,
    last_ts: Option<Timestamp>,
    violation: Option<Witness>,
    work: u64,
    queries: u64,
}

impl SetMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, rec: StreamRecord) -> Result<(), StreamError> {
        check_order(&mut self.last_ts, rec.ts())?;
        match rec {
            StreamRecord::Call { id, kind, value, ts } => {
                if self.open.insert(id, (kind, value, ts, None)).is_some() {
                    return Err(StreamError::DuplicateCall(id));
                }
            }
            StreamRecord::Ret { id, result, .. } => {
                let entry = self.open.get_mut(&id).ok_or(StreamError::ReturnWithoutCall(id))?;
                if entry.3.is_some() {
                    return Err(StreamError::ReturnWithoutCall(id));
                }
                match (entry.0, result) {
                    (OpKind::Add | OpKind::Remove, Some(r @ RetResult::Outcome(_)))
                    | (OpKind::Contains, Some(r @ RetResult::Answer(_))) => entry.3 = Some(r),
                    _ => return Err(StreamError::BadResult(id)),
                }
            }
        }
        self.backlog.push_back(rec);
        self.drain();
        Ok(())
    }

    fn drain(&mut self) {
        while let Some(&rec) = self.backlog.front() {
            let id = match rec {
                StreamRecord::Call { id, .. } | StreamRecord::Ret { id, .. } => id,
            };
            let Some((kind, value, call, Some(result))) = self.open.get(&id).copied() else {
                return;
            };
            self.backlog.pop_front();
            let is_call = matches!(rec, StreamRecord::Call { .. });
            if !is_call {
                self.open.remove(&id);
            }
            if self.violation.is_none() {
                let ret = (!is_call).then_some(rec.ts());
                self.step(id, normalize(kind, result), value, call, ret);
            }
        }
    }

    /// Handles one call (`ret` is `None`) or return.
    fn step(&mut self, id: u64, kind: NormKind, value: Value, call: Timestamp, ret: Option<Timestamp>) {
        self.work += 1;
        let st = self.values.entry(value).or_default();
        let ok = match (kind, ret) {
            (NormKind::Add, None) => {
                st.adds.active += 1;
                true
            }
            (NormKind::Remove, None) => {
                st.removes.active += 1;
                true
            }
            (NormKind::Query(x), None) => {
                self.queries += 1;
                if !st.is(x) {
                    st.pending.insert(id);
                }
                true
            }
            (NormKind::Add, Some(now)) => {
                let ok = st.adds.claim(call) || {
                    self.work += 1;
                    let ok = ensure_state(st, false, now);
                    if ok {
                        st.set(true);
                    }
                    ok
                };
                st.adds.active -= 1;
                ok
            }
            (NormKind::Remove, Some(now)) => {
                let ok = st.removes.claim(call) || {
                    self.work += 1;
                    let ok = ensure_state(st, true, now);
                    if ok {
                        st.set(false);
                    }
                    ok
                };
                st.removes.active -= 1;
                ok
            }
            (NormKind::Query(x), Some(now)) => {
                if st.pending.remove(&id) {
                    self.work += 1;
                    ensure_state(st, x, now)
                } else {
                    true
                }
            }
        };
        if !ok {
            let timestamp = ret.unwrap_or(call);
            self.violation =
                Some(Witness::Set { value, timestamp, reason: SetFailure::EnsureStateFailure });
        }
    }

    /// Number of queries seen so far.
    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn violation(&self) -> Option<&Witness> {
        self.violation.as_ref()
    }

    pub fn work(&self) -> u64 {
        self.work
    }

    /// Total size of all pending-query sets.
    pub fn pending_queries(&self) -> usize {
        self.values.values().map(|s| s.pending.len()).sum()
    }

    pub fn state(&self, v: Value) -> Option<&SetValueState> {
        self.values.get(&v)
    }

    pub fn finish(self) -> Result<Verdict, StreamError> {
        if let Some(w) = self.violation {
            return Ok(Verdict::unlinearizable(w));
        }
        match self.open.keys().min() {
            Some(&id) => Err(StreamError::MissingReturn(id)),
            None => Ok(Verdict::linearizable()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum NormKind {
    Add,
    Remove,
    Query(bool),
}

fn normalize(kind: OpKind, result: RetResult) -> NormKind {
    match (kind, result) {
        (OpKind::Add, RetResult::Outcome(Outcome::Ok)) => NormKind::Add,
        (OpKind::Add, _) => NormKind::Query(true),
        (OpKind::Remove, RetResult::Outcome(Outcome::Ok)) => NormKind::Remove,
        (OpKind::Remove, _) => NormKind::Query(false),
        (OpKind::Contains, RetResult::Answer(a)) => NormKind::Query(a),
        (OpKind::Contains, RetResult::Outcome(_)) => unreachable!("checked when the return arrived"),
    }
}

fn check_order(last: &mut Option<Timestamp>, ts: Timestamp) -> Result<(), StreamError> {
    if last.is_some_and(|l| ts <= l) {
        return Err(StreamError::OutOfOrder { ts });
    }
    *last = Some(ts);
    Ok(())
}

pub fn multiset_linearizable(h: &History) -> Verdict {
    multiset_linearizable_counted(h).0
}

/// Like [`multiset_linearizable`], also returning the number of records
/// processed.
pub fn multiset_linearizable_counted(h: &History) -> (Verdict, u64) {
    debug_assert_eq!(h.adt, Adt::Multiset);
    let mut m = MultisetMonitor::new();
    for rec in history_to_stream(h) {
        m.feed(rec).expect("validated history forms a well-ordered stream");
    }
    let work = m.work();
    (m.finish().expect("every operation returns"), work)
}

pub fn set_linearizable(h: &History) -> Verdict {
    set_linearizable_counted(h).0
}

/// Like [`set_linearizable`], also returning the number of records and
/// state checks processed.
pub fn set_linearizable_counted(h: &History) -> (Verdict, u64) {
    let mut m = SetMonitor::new();
    for rec in history_to_stream(&normalize_failing_ops(h)) {
        m.feed(rec).expect("validated history forms a well-ordered stream");
    }
    let work = m.work();
    (m.finish().expect("every operation returns"), work)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::Operation;

    fn set_history(ops: &[(Event, u64, u64)]) -> History {
        History::new(
            Adt::Set,
            ops.iter()
                .enumerate()
                .map(|(i, &(e, c, r))| Operation::new(i as u64, e, c, r))
                .collect(),
        )
    }

    fn call(id: u64, kind: OpKind, value: Value, ts: u64) -> StreamRecord {
        StreamRecord::Call { id, kind, value, ts }
    }

    fn ret(id: u64, ts: u64) -> StreamRecord {
        StreamRecord::Ret { id, ts, result: None }
    }

    #[test]
    fn sequential_multiset_stream() {
        let mut m = MultisetMonitor::new();
        for r in [call(0, OpKind::Add, 5, 0), ret(0, 1), call(1, OpKind::Remove, 5, 2), ret(1, 3)] {
            m.feed(r).unwrap();
        }
        assert!(m.finish().unwrap().linearizable);
    }

    #[test]
    fn remove_before_any_add_fails_at_its_return() {
        let mut m = MultisetMonitor::new();
        m.feed(call(0, OpKind::Remove, 5, 0)).unwrap();
        assert!(m.violation().is_none());
        m.feed(ret(0, 1)).unwrap();
        assert_eq!(
            m.finish().unwrap().witness,
            Some(Witness::Set { value: 5, timestamp: 1, reason: SetFailure::CountViolation })
        );
    }

    #[test]
    fn multiset_rejects_queries_and_disorder() {
        let mut m = MultisetMonitor::new();
        assert!(m.feed(call(0, OpKind::Contains, 5, 0)).is_err());
        let mut m = MultisetMonitor::new();
        m.feed(call(0, OpKind::Add, 5, 4)).unwrap();
        assert_eq!(m.feed(ret(0, 4)), Err(StreamError::OutOfOrder { ts: 4 }));
        assert_eq!(MultisetMonitor::new().feed(ret(3, 0)), Err(StreamError::ReturnWithoutCall(3)));
    }

    #[test]
    fn ensure_state_keeps_matching_state() {
        let mut st = SetValueState { state: Some(true), ..Default::default() };
        st.pending.insert(7);
        let before = st.clone();
        assert!(ensure_state(&mut st, true, 9));
        assert_eq!(st, before);
    }

    #[test]
    fn ensure_state_needs_a_pending_add() {
        let mut st = SetValueState::default();
        assert!(!ensure_state(&mut st, true, 9));
    }

    #[test]
    fn ensure_state_flips_and_clears_queries() {
        let mut st = SetValueState { state: Some(false), ..Default::default() };
        st.adds.active = 1;
        st.pending.insert(3);
        assert!(ensure_state(&mut st, true, 9));
        assert_eq!(st.state, Some(true));
        assert!(st.pending.is_empty());
        assert_eq!(st.adds.linearized, [9].into());
    }

    #[test]
    fn unknown_state_reads_as_absent() {
        assert!(ensure_state(&mut SetValueState::default(), false, 9));
    }

    #[test]
    fn add_then_contains() {
        let h = set_history(&[(Event::Add(5, Outcome::Ok), 0, 1), (Event::Contains(5, true), 2, 3)]);
        assert!(set_linearizable(&h).linearizable);
    }

    #[test]
    fn contains_of_absent_value() {
        let h = set_history(&[(Event::Contains(5, true), 0, 1)]);
        assert_eq!(
            set_linearizable(&h).witness,
            Some(Witness::Set { value: 5, timestamp: 1, reason: SetFailure::EnsureStateFailure })
        );
    }

    #[test]
    fn query_concurrent_with_add_may_see_it() {
        let h = set_history(&[(Event::Add(5, Outcome::Ok), 0, 3), (Event::Contains(5, true), 1, 2)]);
        assert!(set_linearizable(&h).linearizable);
    }

    #[test]
    fn double_add_needs_a_remove_between() {
        let h = set_history(&[(Event::Add(1, Outcome::Ok), 0, 1), (Event::Add(1, Outcome::Ok), 2, 3)]);
        assert!(!set_linearizable(&h).linearizable);
        let h = set_history(&[
            (Event::Add(1, Outcome::Ok), 0, 1),
            (Event::Remove(1, Outcome::Ok), 2, 5),
            (Event::Add(1, Outcome::Ok), 3, 4),
        ]);
        assert!(set_linearizable(&h).linearizable);
    }

    #[test]
    fn credit_only_goes_to_an_operation_running_when_granted() {
        // The early remove forces the long add in first. The short add,
        // called after that, must not count as the one placed early.
        let h = set_history(&[
            (Event::Add(1, Outcome::Ok), 1, 9),
            (Event::Remove(1, Outcome::Ok), 2, 3),
            (Event::Add(1, Outcome::Ok), 4, 5),
            (Event::Contains(1, false), 6, 8),
        ]);
        assert!(!set_linearizable(&h).linearizable);
    }

    #[test]
    fn failing_ops_become_queries() {
        let h = set_history(&[
            (Event::Add(5, Outcome::Fail), 0, 2),
            (Event::Remove(5, Outcome::Fail), 3, 4),
            (Event::Add(6, Outcome::Ok), 5, 6),
        ]);
        let n = normalize_failing_ops(&h);
        assert_eq!(n.operations[0].event, Event::Contains(5, true));
        assert_eq!(n.operations[1].event, Event::Contains(5, false));
        assert_eq!(n.operations[2].event, Event::Add(6, Outcome::Ok));
        assert_eq!(normalize_failing_ops(&n), n);
        // Adding to an empty set cannot fail.
        assert!(!set_linearizable(&h).linearizable);
    }

    #[test]
    fn stream_waits_for_outcome_of_pending_add() {
        let mut m = SetMonitor::new();
        m.feed(call(0, OpKind::Add, 1, 0)).unwrap();
        m.feed(call(1, OpKind::Contains, 1, 1)).unwrap();
        m.feed(StreamRecord::Ret { id: 1, ts: 2, result: Some(RetResult::Answer(true)) }).unwrap();
        assert!(m.violation().is_none());
        m.feed(StreamRecord::Ret { id: 0, ts: 3, result: Some(RetResult::Outcome(Outcome::Fail)) })
            .unwrap();
        // The add failed, so nothing ever put 1 in the set.
        assert!(m.violation().is_some());
    }

    #[test]
    fn parses_stream_records() {
        assert_eq!(
            StreamRecord::parse("call 3 add 7 10").unwrap(),
            Some(call(3, OpKind::Add, 7, 10))
        );
        assert_eq!(
            StreamRecord::parse("ret 3 12 ok # done").unwrap(),
            Some(StreamRecord::Ret { id: 3, ts: 12, result: Some(RetResult::Outcome(Outcome::Ok)) })
        );
        assert_eq!(StreamRecord::parse("   ").unwrap(), None);
        assert!(StreamRecord::parse("call 3 push 7 10").is_err());
    }

    #[test]
    fn missing_return_is_reported() {
        let mut m = SetMonitor::new();
        m.feed(call(4, OpKind::Add, 1, 0)).unwrap();
        assert_eq!(m.finish(), Err(StreamError::MissingReturn(4)));
    }
}
