//! Synthetic histories: linearizable by construction, arbitrary, mutated,
//! and the stack family with no small unlinearizable core.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::history::{Adt, Event, History, Operation, Outcome, Timestamp, Value};
use crate::oracle::SequentialState;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenConfig {
    pub adt: Adt,
    pub ops: usize,
    /// Size of the value domain for sets and multisets.
    pub values: usize,
    /// Worker count for recorded executions.
    pub threads: usize,
    pub seed: u64,
    /// How far calls and returns may drift from the linearization point,
    /// in units of the gap between consecutive points.
    pub stretch: f64,
    /// Use the buggy stack when recording.
    pub bug: bool,
}

impl GenConfig {
    pub fn new(adt: Adt, ops: usize, seed: u64) -> Self {
        GenConfig { adt, ops, values: 3, threads: 4, seed, stretch: 2.0, bug: false }
    }

    pub fn with_stretch(mut self, stretch: f64) -> Self {
        self.stretch = stretch;
        self
    }

    pub fn with_values(mut self, values: usize) -> Self {
        self.values = values;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One legal step of the ADT from `state`, drawn at random.
fn legal_event(state: &SequentialState, next_value: &mut Value, domain: usize, rng: &mut ChaCha8Rng) -> Event {
    let fresh = |next: &mut Value| {
        let v = *next;
        *next += 1;
        v
    };
    match state {
        SequentialState::Stack(s) => match (s.last(), rng.gen_bool(0.5)) {
            (Some(&top), true) => Event::Pop(top),
            (None, true) if rng.gen_bool(0.3) => Event::PopEmpty,
            _ => Event::Push(fresh(next_value)),
        },
        SequentialState::Queue(q) => match (q.front(), rng.gen_bool(0.5)) {
            (Some(&front), true) => Event::Pop(front),
            _ => Event::Push(fresh(next_value)),
        },
        SequentialState::Set(s) => {
            let v = rng.gen_range(0..domain.max(1)) as Value;
            let present = s.contains(&v);
            match rng.gen_range(0..3) {
                0 => Event::Add(v, if present { Outcome::Fail } else { Outcome::Ok }),
                1 => Event::Remove(v, if present { Outcome::Ok } else { Outcome::Fail }),
                _ => Event::Contains(v, present),
            }
        }
        SequentialState::Multiset(m) => {
            let v = rng.gen_range(0..domain.max(1)) as Value;
            if m.contains_key(&v) && rng.gen_bool(0.5) {
                Event::Remove(v, Outcome::Ok)
            } else {
                Event::Add(v, Outcome::Ok)
            }
        }
    }
}

/// Renumbers endpoints to `0..2n`, ordering ties as calls before returns.
fn rank(adt: Adt, raw: Vec<(Event, i64, i64)>) -> History {
    let mut points: Vec<(i64, u8, usize)> = Vec::with_capacity(2 * raw.len());
    for (i, &(_, c, r)) in raw.iter().enumerate() {
        points.push((c, 0, i));
        points.push((r, 1, i));
    }
    points.sort_unstable();
    let mut call = vec![0; raw.len()];
    let mut ret = vec![0; raw.len()];
    for (t, &(_, kind, i)) in points.iter().enumerate() {
        if kind == 0 {
            call[i] = t as Timestamp;
        } else {
            ret[i] = t as Timestamp;
        }
    }
    History::new(
        adt,
        raw.iter()
            .enumerate()
            .map(|(i, &(e, _, _))| Operation::new(i as u64, e, call[i], ret[i]))
            .collect(),
    )
}

/// Runs the ADT sequentially, then widens each operation around its
/// linearization point. Stack and queue values are never reused.
pub fn gen_linearizable(cfg: &GenConfig) -> History {
    let mut rng = rng_for(cfg.seed);
    let mut state = SequentialState::new(cfg.adt);
    let mut next_value = 0;
    let reach = (cfg.stretch.max(0.0) * 1000.0) as i64;
    let mut raw = Vec::with_capacity(cfg.ops);
    for i in 0..cfg.ops {
        let e = legal_event(&state, &mut next_value, cfg.values, &mut rng);
        let applied = state.apply(&e);
        debug_assert!(applied);
        let point = i as i64 * 1000 + 500;
        let call = point - 1 - rng.gen_range(0..=reach);
        let ret = point + 1 + rng.gen_range(0..=reach);
        raw.push((e, call, ret));
    }
    rank(cfg.adt, raw)
}

/// Arbitrary well-formed history: random events on random intervals.
/// Stack and queue pushes use distinct values; pops pick among them or,
/// rarely, a value never pushed.
pub fn gen_random(cfg: &GenConfig) -> History {
    let mut rng = rng_for(cfg.seed);
    let n = cfg.ops;
    let mut points: Vec<i64> = (0..2 * n as i64).collect();
    points.shuffle(&mut rng);
    let mut pushed: Vec<Value> = Vec::new();
    let mut next_value = 0;
    let domain = cfg.values.max(1);
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let e = match cfg.adt {
            Adt::Stack | Adt::Queue => {
                let roll = rng.gen_range(0..20);
                if cfg.adt == Adt::Stack && roll < 2 {
                    Event::PopEmpty
                } else if roll < 3 {
                    next_value += 1;
                    Event::Pop(-next_value)
                } else if roll < 11 && !pushed.is_empty() {
                    let k = rng.gen_range(0..pushed.len());
                    Event::Pop(pushed.swap_remove(k))
                } else {
                    next_value += 1;
                    pushed.push(next_value);
                    Event::Push(next_value)
                }
            }
            Adt::Set => {
                let v = rng.gen_range(0..domain) as Value;
                let o = if rng.gen_bool(0.75) { Outcome::Ok } else { Outcome::Fail };
                match rng.gen_range(0..3) {
                    0 => Event::Add(v, o),
                    1 => Event::Remove(v, o),
                    _ => Event::Contains(v, rng.gen()),
                }
            }
            Adt::Multiset => {
                let v = rng.gen_range(0..domain) as Value;
                if rng.gen_bool(0.5) {
                    Event::Add(v, Outcome::Ok)
                } else {
                    Event::Remove(v, Outcome::Ok)
                }
            }
        };
        let (a, b) = (points[2 * i], points[2 * i + 1]);
        raw.push((e, a.min(b), a.max(b)));
    }
    rank(cfg.adt, raw)
}

/// Which perturbation [`mutate`] applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    Identity,
    /// Two pops exchanged values, or a set result was inverted.
    SwapValues,
    /// An operation collapsed onto its call time.
    Shrink,
    /// Two operations exchanged return times.
    SwapReturns,
}

/// Applies one random perturbation, meant to break linearizability.
pub fn mutate(h: &History, seed: u64) -> (History, Mutation) {
    let mut rng = rng_for(seed);
    let mut out = h.clone();
    let n = out.len();
    if n == 0 {
        return (out, Mutation::Identity);
    }
    let kind = match rng.gen_range(0..8) {
        0 => Mutation::Identity,
        1..=3 => Mutation::SwapValues,
        4..=5 => Mutation::Shrink,
        _ => Mutation::SwapReturns,
    };
    match kind {
        Mutation::Identity => {}
        Mutation::SwapValues => {
            if out.adt.is_container() {
                let pops: Vec<usize> =
                    (0..n).filter(|&i| matches!(out.operations[i].event, Event::Pop(_))).collect();
                if pops.len() >= 2 {
                    let pick: Vec<&usize> = pops.choose_multiple(&mut rng, 2).collect();
                    let (i, j) = (*pick[0], *pick[1]);
                    let ei = out.operations[i].event;
                    out.operations[i].event = out.operations[j].event;
                    out.operations[j].event = ei;
                } else {
                    return (out, Mutation::Identity);
                }
            } else {
                let i = rng.gen_range(0..n);
                let e = &mut out.operations[i].event;
                *e = match *e {
                    Event::Add(v, Outcome::Ok) if out.adt == Adt::Multiset => Event::Remove(v, Outcome::Ok),
                    Event::Remove(v, Outcome::Ok) if out.adt == Adt::Multiset => Event::Add(v, Outcome::Ok),
                    Event::Add(v, o) => Event::Add(v, flip(o)),
                    Event::Remove(v, o) => Event::Remove(v, flip(o)),
                    Event::Contains(v, a) => Event::Contains(v, !a),
                    e => e,
                };
            }
        }
        Mutation::Shrink => {
            // Doubling leaves odd slots free for the new return.
            for op in &mut out.operations {
                op.call *= 2;
                op.ret *= 2;
            }
            let i = rng.gen_range(0..n);
            out.operations[i].ret = out.operations[i].call + 1;
            out.compact_timestamps();
        }
        Mutation::SwapReturns => {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            let (ri, rj) = (out.operations[i].ret, out.operations[j].ret);
            if i == j || rj <= out.operations[i].call || ri <= out.operations[j].call {
                return (out, Mutation::Identity);
            }
            out.operations[i].ret = rj;
            out.operations[j].ret = ri;
        }
    }
    (out, kind)
}

fn flip(o: Outcome) -> Outcome {
    match o {
        Outcome::Ok => Outcome::Fail,
        Outcome::Fail => Outcome::Ok,
    }
}

/// Stack history over values `1..=n` that is unlinearizable although
/// dropping any single value makes it linearizable.
///
/// For `n = 2` it is the sequential run push 1, push 2, pop 1, pop 2. For
/// larger `n`, value 1 is pushed first, the pushes of `2..=n` are all
/// called next, and then the return of push `i+1` alternates with the call
/// of pop `i`, so each value's inner window overlaps only its neighbours'.
/// The pops of `1..n` return afterwards and pop `n` runs last.
pub fn gen_small_model_family(n: usize) -> History {
    assert!(n >= 2, "family starts at two values");
    let mut ops: Vec<Operation> = Vec::with_capacity(2 * n);
    let mut t: Timestamp = 0;
    let mut tick = || {
        let now = t;
        t += 1;
        now
    };
    if n == 2 {
        for e in [Event::Push(1), Event::Push(2), Event::Pop(1), Event::Pop(2)] {
            let (c, r) = (tick(), tick());
            ops.push(Operation::new(ops.len() as u64, e, c, r));
        }
        return History::new(Adt::Stack, ops);
    }
    let mut push_call = vec![0; n + 1];
    let mut push_ret = vec![0; n + 1];
    let mut pop_call = vec![0; n + 1];
    let mut pop_ret = vec![0; n + 1];
    push_call[1] = tick();
    push_ret[1] = tick();
    for c in &mut push_call[2..=n] {
        *c = tick();
    }
    for v in 1..n {
        push_ret[v + 1] = tick();
        pop_call[v] = tick();
    }
    for r in &mut pop_ret[1..n] {
        *r = tick();
    }
    pop_call[n] = tick();
    pop_ret[n] = tick();
    for v in 1..=n {
        let id = ops.len() as u64;
        ops.push(Operation::new(id, Event::Push(v as Value), push_call[v], push_ret[v]));
        ops.push(Operation::new(id + 1, Event::Pop(v as Value), pop_call[v], pop_ret[v]));
    }
    History::new(Adt::Stack, ops)
}
