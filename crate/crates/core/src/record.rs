//! Records histories from real concurrent executions.
//!
//! Each worker reads a monotonic clock and draws a ticket from a shared
//! counter right before invoking an operation, and again right after it
//! returns. Sorting all endpoints by (clock, ticket) and ranking them gives
//! distinct timestamps that never order two endpoints against real time.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicI64, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crossbeam_epoch::{self as epoch, Atomic, Owned, Shared};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::generators::GenConfig;
use crate::history::{Adt, Event, History, Operation, Timestamp, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceImpl {
    LockStack,
    TreiberStack,
    /// Pop reads the top, waits, then installs its successor blindly.
    BuggyStack,
    LockQueue,
    MsQueue,
}

impl ReferenceImpl {
    pub fn adt(self) -> Adt {
        match self {
            ReferenceImpl::LockStack | ReferenceImpl::TreiberStack | ReferenceImpl::BuggyStack => Adt::Stack,
            ReferenceImpl::LockQueue | ReferenceImpl::MsQueue => Adt::Queue,
        }
    }
}

impl std::str::FromStr for ReferenceImpl {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "lock-stack" => ReferenceImpl::LockStack,
            "treiber" => ReferenceImpl::TreiberStack,
            "buggy-stack" => ReferenceImpl::BuggyStack,
            "lock-queue" => ReferenceImpl::LockQueue,
            "ms-queue" => ReferenceImpl::MsQueue,
            other => return Err(format!("unknown implementation `{other}`")),
        })
    }
}

/// A concurrent container under test. `jitter` is a random number the
/// buggy stack uses to size its race window.
trait Container: Sync {
    fn push(&self, v: Value);
    fn pop(&self, jitter: u32) -> Option<Value>;
}

struct LockStack(Mutex<Vec<Value>>);

impl Container for LockStack {
    fn push(&self, v: Value) {
        self.0.lock().unwrap().push(v);
    }

    fn pop(&self, _: u32) -> Option<Value> {
        self.0.lock().unwrap().pop()
    }
}

struct LockQueue(Mutex<VecDeque<Value>>);

impl Container for LockQueue {
    fn push(&self, v: Value) {
        self.0.lock().unwrap().push_back(v);
    }

    fn pop(&self, _: u32) -> Option<Value> {
        self.0.lock().unwrap().pop_front()
    }
}

struct TreiberNode {
    value: Value,
    next: Atomic<TreiberNode>,
}

struct TreiberStack {
    head: Atomic<TreiberNode>,
}

impl Container for TreiberStack {
    fn push(&self, value: Value) {
        let mut node = Owned::new(TreiberNode { value, next: Atomic::null() });
        let guard = epoch::pin();
        loop {
            let head = self.head.load(Ordering::Acquire, &guard);
            node.next.store(head, Ordering::Relaxed);
            match self.head.compare_exchange(head, node, Ordering::Release, Ordering::Relaxed, &guard) {
                Ok(_) => return,
                Err(e) => node = e.new,
            }
        }
    }

    fn pop(&self, _: u32) -> Option<Value> {
        let guard = epoch::pin();
        loop {
            let head = self.head.load(Ordering::Acquire, &guard);
            let node = unsafe { head.as_ref() }?;
            let next = node.next.load(Ordering::Acquire, &guard);
            if self
                .head
                .compare_exchange(head, next, Ordering::AcqRel, Ordering::Acquire, &guard)
                .is_ok()
            {
                // SAFETY: the node is unlinked and no new reader can reach it.
                unsafe { guard.defer_destroy(head) };
                return Some(node.value);
            }
        }
    }
}

impl Drop for TreiberStack {
    fn drop(&mut self) {
        // SAFETY: exclusive access; no other thread holds references.
        unsafe {
            let guard = epoch::unprotected();
            let mut cur = self.head.load(Ordering::Relaxed, guard);
            while let Some(node) = cur.as_ref() {
                let next = node.next.load(Ordering::Relaxed, guard);
                drop(cur.into_owned());
                cur = next;
            }
        }
    }
}

struct MsNode {
    value: Value,
    next: Atomic<MsNode>,
}

/// Michael-Scott queue; `head` always points at a sentinel.
struct MsQueue {
    head: Atomic<MsNode>,
    tail: Atomic<MsNode>,
}

impl MsQueue {
    fn new() -> Self {
        let q = MsQueue { head: Atomic::null(), tail: Atomic::null() };
        let sentinel = Owned::new(MsNode { value: 0, next: Atomic::null() });
        // SAFETY: the queue is not shared yet.
        let guard = unsafe { epoch::unprotected() };
        let s = sentinel.into_shared(guard);
        q.head.store(s, Ordering::Relaxed);
        q.tail.store(s, Ordering::Relaxed);
        q
    }
}

impl Container for MsQueue {
    fn push(&self, value: Value) {
        let guard = epoch::pin();
        let node = Owned::new(MsNode { value, next: Atomic::null() }).into_shared(&guard);
        loop {
            let tail = self.tail.load(Ordering::Acquire, &guard);
            // SAFETY: tail is never null and is protected by the guard.
            let t = unsafe { tail.deref() };
            let next = t.next.load(Ordering::Acquire, &guard);
            if !next.is_null() {
                let _ = self.tail.compare_exchange(tail, next, Ordering::Release, Ordering::Relaxed, &guard);
                continue;
            }
            if t.next
                .compare_exchange(Shared::null(), node, Ordering::Release, Ordering::Relaxed, &guard)
                .is_ok()
            {
                let _ = self.tail.compare_exchange(tail, node, Ordering::Release, Ordering::Relaxed, &guard);
                return;
            }
        }
    }

    fn pop(&self, _: u32) -> Option<Value> {
        let guard = epoch::pin();
        loop {
            let head = self.head.load(Ordering::Acquire, &guard);
            // SAFETY: head is never null and is protected by the guard.
            let h = unsafe { head.deref() };
            let next = h.next.load(Ordering::Acquire, &guard);
            let n = unsafe { next.as_ref() }?;
            let tail = self.tail.load(Ordering::Acquire, &guard);
            if tail == head {
                let _ = self.tail.compare_exchange(tail, next, Ordering::Release, Ordering::Relaxed, &guard);
            }
            if self
                .head
                .compare_exchange(head, next, Ordering::Release, Ordering::Relaxed, &guard)
                .is_ok()
            {
                // SAFETY: the old sentinel is unlinked.
                unsafe { guard.defer_destroy(head) };
                return Some(n.value);
            }
        }
    }
}

impl Drop for MsQueue {
    fn drop(&mut self) {
        // SAFETY: exclusive access.
        unsafe {
            let guard = epoch::unprotected();
            let mut cur = self.head.load(Ordering::Relaxed, guard);
            while let Some(node) = cur.as_ref() {
                let next = node.next.load(Ordering::Relaxed, guard);
                drop(cur.into_owned());
                cur = next;
            }
        }
    }
}

const NIL: usize = usize::MAX;

/// Stack over a preallocated node arena. Push is a correct CAS loop; pop
/// re-reads nothing after its wait, so concurrent pops can return the same
/// node or resurrect a popped one.
struct BuggyStack {
    values: Vec<AtomicI64>,
    next: Vec<AtomicUsize>,
    allocated: AtomicUsize,
    head: AtomicUsize,
}

impl BuggyStack {
    fn new(capacity: usize) -> Self {
        BuggyStack {
            values: (0..capacity).map(|_| AtomicI64::new(0)).collect(),
            next: (0..capacity).map(|_| AtomicUsize::new(NIL)).collect(),
            allocated: AtomicUsize::new(0),
            head: AtomicUsize::new(NIL),
        }
    }
}

impl Container for BuggyStack {
    fn push(&self, v: Value) {
        let i = self.allocated.fetch_add(1, Ordering::Relaxed);
        self.values[i].store(v, Ordering::Relaxed);
        loop {
            let head = self.head.load(Ordering::Acquire);
            self.next[i].store(head, Ordering::Relaxed);
            if self.head.compare_exchange(head, i, Ordering::AcqRel, Ordering::Acquire).is_ok() {
                return;
            }
        }
    }

    fn pop(&self, jitter: u32) -> Option<Value> {
        let top = self.head.load(Ordering::Acquire);
        if top == NIL {
            return None;
        }
        let next = self.next[top].load(Ordering::Acquire);
        for _ in 0..jitter % 64 {
            std::hint::spin_loop();
        }
        if jitter.is_multiple_of(4) {
            std::thread::yield_now();
        }
        self.head.store(next, Ordering::Release);
        Some(self.values[top].load(Ordering::Relaxed))
    }
}

/// (clock nanoseconds, ticket) at one endpoint.
type Stamp = (u128, u64);

struct Raw {
    event: Event,
    call: Stamp,
    ret: Stamp,
}

/// Runs `cfg.threads` workers, each doing `cfg.ops / cfg.threads` random
/// operations (push or pop with equal odds) on one shared instance.
/// A pop on an empty stack is recorded as a pop-empty; on an empty queue it
/// is not recorded.
pub fn record_execution(imp: ReferenceImpl, cfg: &GenConfig) -> History {
    let threads = cfg.threads.max(1);
    let per_thread = cfg.ops.div_ceil(threads);
    let imp = if cfg.bug && imp.adt() == Adt::Stack { ReferenceImpl::BuggyStack } else { imp };
    let container: Box<dyn Container> = match imp {
        ReferenceImpl::LockStack => Box::new(LockStack(Mutex::new(Vec::new()))),
        ReferenceImpl::TreiberStack => Box::new(TreiberStack { head: Atomic::null() }),
        ReferenceImpl::BuggyStack => Box::new(BuggyStack::new(threads * per_thread)),
        ReferenceImpl::LockQueue => Box::new(LockQueue(Mutex::new(VecDeque::new()))),
        ReferenceImpl::MsQueue => Box::new(MsQueue::new()),
    };
    let container = container.as_ref();
    let adt = imp.adt();
    let start = Instant::now();
    let tickets = AtomicU64::new(0);
    let stamp = || (start.elapsed().as_nanos(), tickets.fetch_add(1, Ordering::SeqCst));

    let logs: Vec<Vec<Raw>> = std::thread::scope(|s| {
        let workers: Vec<_> = (0..threads)
            .map(|t| {
                let stamp = &stamp;
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((t as u64 + 1) << 40));
                    let mut log = Vec::with_capacity(per_thread);
                    for k in 0..per_thread {
                        if rng.gen_bool(0.5) {
                            let v = ((t as Value) << 32) | k as Value;
                            let call = stamp();
                            container.push(v);
                            let ret = stamp();
                            log.push(Raw { event: Event::Push(v), call, ret });
                        } else {
                            let jitter = rng.gen();
                            let call = stamp();
                            let got = container.pop(jitter);
                            let ret = stamp();
                            match (got, adt) {
                                (Some(v), _) => log.push(Raw { event: Event::Pop(v), call, ret }),
                                (None, Adt::Stack) => log.push(Raw { event: Event::PopEmpty, call, ret }),
                                (None, _) => {}
                            }
                        }
                    }
                    log
                })
            })
            .collect();
        workers.into_iter().map(|w| w.join().expect("worker panicked")).collect()
    });

    let raw: Vec<Raw> = logs.into_iter().flatten().collect();
    let mut points: Vec<(Stamp, usize, bool)> = Vec::with_capacity(2 * raw.len());
    for (i, r) in raw.iter().enumerate() {
        points.push((r.call, i, false));
        points.push((r.ret, i, true));
    }
    points.sort_unstable_by_key(|p| p.0);
    let mut ts = vec![(0, 0); raw.len()];
    for (t, &(_, i, is_ret)) in points.iter().enumerate() {
        if is_ret {
            ts[i].1 = t as Timestamp;
        } else {
            ts[i].0 = t as Timestamp;
        }
    }
    let mut ops: Vec<Operation> = raw
        .iter()
        .enumerate()
        .map(|(i, r)| Operation::new(0, r.event, ts[i].0, ts[i].1))
        .collect();
    ops.sort_by_key(|op| op.call);
    for (id, op) in ops.iter_mut().enumerate() {
        op.id = id as u64;
    }
    History::new(adt, ops)
}
