//! Ground truth for small histories.
//!
//! [`brute_force_linearizable`] searches every precedence-respecting order
//! of the operations, pruning repeated (completed set, abstract state)
//! pairs. [`saturation_baseline`] is an order-saturation heuristic kept for
//! differential experiments; its verdicts are not trusted.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use thiserror::Error;

use crate::history::{differentiate, Adt, Event, History, Operation, Outcome, Value};
use crate::verdict::{Verdict, Witness};

pub const DEFAULT_MAX_OPS: usize = 10;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("history has {ops} operations, above the oracle bound of {max}")]
    TooLarge { ops: usize, max: usize },
}

/// Abstract state of one ADT.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SequentialState {
    Stack(Vec<Value>),
    Queue(VecDeque<Value>),
    Set(BTreeSet<Value>),
    Multiset(BTreeMap<Value, usize>),
}

impl SequentialState {
    pub fn new(adt: Adt) -> Self {
        match adt {
            Adt::Stack => SequentialState::Stack(Vec::new()),
            Adt::Queue => SequentialState::Queue(VecDeque::new()),
            Adt::Set => SequentialState::Set(BTreeSet::new()),
            Adt::Multiset => SequentialState::Multiset(BTreeMap::new()),
        }
    }

    /// Applies `e` if it is legal in this state.
    pub fn apply(&mut self, e: &Event) -> bool {
        match (self, *e) {
            (SequentialState::Stack(s), Event::Push(v)) => {
                s.push(v);
                true
            }
            (SequentialState::Stack(s), Event::Pop(v)) => {
                if s.last() == Some(&v) {
                    s.pop();
                    true
                } else {
                    false
                }
            }
            (SequentialState::Stack(s), Event::PopEmpty) => s.is_empty(),
            (SequentialState::Queue(q), Event::Push(v)) => {
                q.push_back(v);
                true
            }
            (SequentialState::Queue(q), Event::Pop(v)) => {
                if q.front() == Some(&v) {
                    q.pop_front();
                    true
                } else {
                    false
                }
            }
            (SequentialState::Set(s), Event::Add(v, Outcome::Ok)) => s.insert(v),
            (SequentialState::Set(s), Event::Add(v, Outcome::Fail)) => s.contains(&v),
            (SequentialState::Set(s), Event::Remove(v, Outcome::Ok)) => s.remove(&v),
            (SequentialState::Set(s), Event::Remove(v, Outcome::Fail)) => !s.contains(&v),
            (SequentialState::Set(s), Event::Contains(v, a)) => s.contains(&v) == a,
            (SequentialState::Multiset(m), Event::Add(v, Outcome::Ok)) => {
                *m.entry(v).or_default() += 1;
                true
            }
            (SequentialState::Multiset(m), Event::Remove(v, Outcome::Ok)) => match m.get_mut(&v) {
                Some(n) if *n > 1 => {
                    *n -= 1;
                    true
                }
                Some(_) => {
                    m.remove(&v);
                    true
                }
                None => false,
            },
            _ => false,
        }
    }
}

/// Whether the events, in order, are a legal run of the ADT from empty.
pub fn sequential_check(trace: &[Event], adt: Adt) -> bool {
    let mut s = SequentialState::new(adt);
    trace.iter().all(|e| s.apply(e))
}

/// Exhaustive check with the default bound.
pub fn brute_force_linearizable(h: &History) -> Result<Verdict, OracleError> {
    brute_force_with_bound(h, DEFAULT_MAX_OPS)
}

/// Exhaustive check; refuses histories with more than `max_ops` operations
/// (at most 64).
pub fn brute_force_with_bound(h: &History, max_ops: usize) -> Result<Verdict, OracleError> {
    let n = h.len();
    if n > max_ops.min(64) {
        return Err(OracleError::TooLarge { ops: n, max: max_ops.min(64) });
    }
    let ops = &h.operations;
    // preds[a]: operations that returned before `a` was called.
    let preds: Vec<u64> = ops
        .iter()
        .map(|a| {
            ops.iter()
                .enumerate()
                .filter(|(_, b)| b.precedes(a))
                .fold(0u64, |m, (j, _)| m | 1 << j)
        })
        .collect();
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut dead: HashSet<(u64, SequentialState)> = HashSet::new();
    let found = search(ops, &preds, full, 0, SequentialState::new(h.adt), &mut dead);
    Ok(if found { Verdict::linearizable() } else { Verdict::unlinearizable(Witness::NoLinearization) })
}

fn search(
    ops: &[Operation],
    preds: &[u64],
    full: u64,
    done: u64,
    state: SequentialState,
    dead: &mut HashSet<(u64, SequentialState)>,
) -> bool {
    if done == full {
        return true;
    }
    if dead.contains(&(done, state.clone())) {
        return false;
    }
    for (i, op) in ops.iter().enumerate() {
        let bit = 1u64 << i;
        if done & bit != 0 || preds[i] & !done != 0 {
            continue;
        }
        let mut next = state.clone();
        if next.apply(&op.event) && search(ops, preds, full, done | bit, next, dead) {
            return true;
        }
    }
    dead.insert((done, state));
    false
}

/// Order-saturation heuristic for stacks and queues. Starts from real-time
/// precedence, adds push-before-pop per value, then closes under the
/// ADT's ordering rule and transitivity. A cycle means unlinearizable.
///
/// Experimental: the rule set is incomplete and its soundness is unproven,
/// so disagreements with [`brute_force_linearizable`] are expected.
pub fn saturation_baseline(h: &History) -> Verdict {
    let h = match differentiate(h) {
        Ok((d, _)) => d,
        Err(crate::history::DifferentiateError::ExcessPops { value }) => {
            return Verdict::unlinearizable(Witness::ExcessPop { value })
        }
    };
    let n = h.len();
    let ops = &h.operations;
    let mut before = vec![vec![false; n]; n];
    for (i, a) in ops.iter().enumerate() {
        for (j, b) in ops.iter().enumerate() {
            before[i][j] = a.precedes(b);
        }
    }
    // (push index, pop index) per value.
    let mut pairs: BTreeMap<Value, (Option<usize>, Option<usize>)> = BTreeMap::new();
    for (i, op) in ops.iter().enumerate() {
        match op.event {
            Event::Push(v) => pairs.entry(v).or_default().0 = Some(i),
            Event::Pop(v) => pairs.entry(v).or_default().1 = Some(i),
            _ => {}
        }
    }
    let matched: Vec<(usize, usize)> =
        pairs.values().filter_map(|&(u, o)| Some((u?, o?))).collect();
    for &(u, o) in &matched {
        before[u][o] = true;
    }

    loop {
        close(&mut before);
        if let Some(x) = (0..n).find(|&x| before[x][x]) {
            let operations =
                (0..n).filter(|&y| before[x][y] && before[y][x]).map(|y| ops[y].id).collect();
            return Verdict::unlinearizable(Witness::Cycle { operations });
        }
        let mut changed = false;
        for &(ua, oa) in &matched {
            for &(ub, ob) in &matched {
                if ua == ub {
                    continue;
                }
                let derived: &[(usize, usize)] = match h.adt {
                    Adt::Stack if before[ua][ub] && before[oa][ob] => &[(oa, ub)],
                    Adt::Queue if before[ua][ub] => &[(oa, ob)],
                    Adt::Queue if before[oa][ob] => &[(ua, ub)],
                    _ => &[],
                };
                for &(x, y) in derived {
                    if !before[x][y] {
                        before[x][y] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return Verdict::linearizable();
        }
    }
}

/// Warshall transitive closure in place.
#[allow(clippy::needless_range_loop)] // rows i and k alias when i == k
fn close(r: &mut [Vec<bool>]) {
    let n = r.len();
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(adt: Adt, ops: &[(Event, u64, u64)]) -> History {
        History::new(
            adt,
            ops.iter()
                .enumerate()
                .map(|(i, &(e, c, r))| Operation::new(i as u64, e, c, r))
                .collect(),
        )
    }

    fn h1() -> History {
        history(
            Adt::Stack,
            &[
                (Event::Push(0), 0, 2),
                (Event::Push(1), 1, 3),
                (Event::Pop(1), 4, 6),
                (Event::Pop(0), 5, 7),
            ],
        )
    }

    fn fifo(adt: Adt) -> History {
        history(
            adt,
            &[
                (Event::Push(1), 0, 1),
                (Event::Push(2), 2, 3),
                (Event::Pop(1), 4, 5),
                (Event::Pop(2), 6, 7),
            ],
        )
    }

    /// Tries every permutation, without pruning.
    fn naive(h: &History) -> bool {
        fn go(h: &History, used: &mut Vec<bool>, order: &mut Vec<usize>) -> bool {
            if order.len() == h.len() {
                let respects = order.iter().enumerate().all(|(i, &a)| {
                    order[i + 1..].iter().all(|&b| !h.operations[b].precedes(&h.operations[a]))
                });
                let trace: Vec<Event> = order.iter().map(|&i| h.operations[i].event).collect();
                return respects && sequential_check(&trace, h.adt);
            }
            for i in 0..h.len() {
                if !used[i] {
                    used[i] = true;
                    order.push(i);
                    let ok = go(h, used, order);
                    order.pop();
                    used[i] = false;
                    if ok {
                        return true;
                    }
                }
            }
            false
        }
        go(h, &mut vec![false; h.len()], &mut Vec::new())
    }

    #[test]
    fn renamed_trace_is_a_stack_run() {
        // Differentiated rendering: the second 2 is spelled 3.
        let t = [
            Event::Push(1),
            Event::Push(0),
            Event::Pop(0),
            Event::Push(2),
            Event::Push(3),
            Event::Pop(3),
            Event::Pop(2),
            Event::Pop(1),
        ];
        assert!(sequential_check(&t, Adt::Stack));
    }

    #[test]
    fn sequential_semantics() {
        assert!(!sequential_check(&[Event::Push(1), Event::Push(2), Event::Pop(1)], Adt::Stack));
        let fifo = [Event::Push(1), Event::Push(2), Event::Pop(1), Event::Pop(2)];
        assert!(sequential_check(&fifo, Adt::Queue));
        assert!(sequential_check(&[Event::PopEmpty], Adt::Stack));
        assert!(!sequential_check(&[Event::Push(1), Event::PopEmpty], Adt::Stack));
        assert!(sequential_check(
            &[Event::Add(1, Outcome::Ok), Event::Add(1, Outcome::Fail), Event::Contains(1, true)],
            Adt::Set
        ));
        assert!(!sequential_check(&[Event::Remove(1, Outcome::Ok)], Adt::Multiset));
        assert!(sequential_check(
            &[
                Event::Add(1, Outcome::Ok),
                Event::Add(1, Outcome::Ok),
                Event::Remove(1, Outcome::Ok),
                Event::Remove(1, Outcome::Ok)
            ],
            Adt::Multiset
        ));
    }

    #[test]
    fn brute_force_examples() {
        assert!(brute_force_linearizable(&h1()).unwrap().linearizable);
        assert!(!brute_force_linearizable(&fifo(Adt::Stack)).unwrap().linearizable);
        assert!(brute_force_linearizable(&fifo(Adt::Queue)).unwrap().linearizable);
        assert!(brute_force_linearizable(&History::empty(Adt::Set)).unwrap().linearizable);
    }

    #[test]
    fn bound_is_enforced() {
        let h = fifo(Adt::Queue);
        assert_eq!(brute_force_with_bound(&h, 3), Err(OracleError::TooLarge { ops: 4, max: 3 }));
    }

    #[test]
    fn memoized_search_matches_permutations() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let adt = [Adt::Stack, Adt::Queue, Adt::Set, Adt::Multiset][rng.gen_range(0..4)];
            let n = rng.gen_range(0..=6);
            let mut points: Vec<u64> = (0..2 * n as u64).collect();
            rand::seq::SliceRandom::shuffle(points.as_mut_slice(), &mut rng);
            let ops: Vec<(Event, u64, u64)> = (0..n)
                .map(|i| {
                    let v = rng.gen_range(0..3);
                    let e = match (adt, rng.gen_range(0..3)) {
                        (Adt::Stack | Adt::Queue, 0) => Event::Pop(v),
                        (Adt::Stack | Adt::Queue, _) => Event::Push(v),
                        (_, 0) => Event::Remove(v, Outcome::Ok),
                        (Adt::Set, 1) => Event::Contains(v, rng.gen()),
                        _ => Event::Add(v, Outcome::Ok),
                    };
                    let (a, b) = (points[2 * i], points[2 * i + 1]);
                    (e, a.min(b), a.max(b))
                })
                .collect();
            let h = history(adt, &ops);
            assert_eq!(brute_force_linearizable(&h).unwrap().linearizable, naive(&h), "{h:?}");
        }
    }

    #[test]
    fn baseline_examples() {
        assert!(saturation_baseline(&h1()).linearizable);
        let v = saturation_baseline(&fifo(Adt::Stack));
        assert!(matches!(v.witness, Some(Witness::Cycle { .. })));
        assert!(saturation_baseline(&fifo(Adt::Queue)).linearizable);
        assert!(saturation_baseline(&History::empty(Adt::Stack)).linearizable);
    }
}
