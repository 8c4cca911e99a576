//! Quadratic stack monitor.
//!
//! Values are viewed through their inner windows `[push_ret, pop_call]`.
//! Overlapping windows merge into *covers*, where the stack is surely
//! non-empty; the gaps between covers, plus the two ends of the history,
//! are *openings*, where it may be empty. The monitor repeatedly peels off
//! extreme values (pushed before anything else finishes, popped after
//! everything else starts) or splits the history at its first internal
//! opening. A sub-history with neither is unlinearizable.

use crate::history::{
    op_to_val, remove_overlapping_pairs, AttributedValue, Event, History, Interval, Value,
};
use crate::prep::prepare;
use crate::verdict::{Verdict, Witness};

/// Covers of the given values, sorted and disjoint. Every value must have
/// an inner window.
pub fn p_segments(vals: &[AttributedValue]) -> Vec<Interval> {
    let mut sorted = vals.to_vec();
    sorted.sort_by_key(|a| a.push_ret);
    let mut work = 0;
    sweep(&sorted, (0..sorted.len()).collect::<Vec<_>>().as_slice(), &mut work)
}

/// Merges inner windows of `sub` (indices into `vals`, in push-return order).
fn sweep(vals: &[AttributedValue], sub: &[usize], work: &mut u64) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::new();
    for &i in sub {
        *work += 1;
        let a = &vals[i];
        debug_assert!(a.push_ret <= a.pop_call, "value {} has no inner window", a.value);
        match out.last_mut() {
            Some(cur) if a.push_ret <= cur.right => cur.right = cur.right.max(a.pop_call),
            _ => out.push(Interval::new(a.push_ret, a.pop_call)),
        }
    }
    out
}

/// Openings around the covers `p` within `span`. Always one more than `p`.
pub fn d_segments(span: Interval, p: &[Interval]) -> Vec<Interval> {
    let (Some(first), Some(last)) = (p.first(), p.last()) else {
        return vec![span];
    };
    let mut out = Vec::with_capacity(p.len() + 1);
    out.push(Interval::new(span.left, first.left));
    out.extend(p.windows(2).map(|w| Interval::new(w[0].right, w[1].left)));
    out.push(Interval::new(last.right, span.right));
    out
}

/// `[min push call, max pop return]` of the values.
fn value_span(vals: &[AttributedValue], sub: &[usize], work: &mut u64) -> Interval {
    let mut lo = u64::MAX;
    let mut hi = 0;
    for &i in sub {
        *work += 1;
        lo = lo.min(vals[i].push_call);
        hi = hi.max(vals[i].pop_ret);
    }
    Interval::new(lo, hi)
}

/// Drops every pop-empty overlapping one of the openings `d`. Fails with the
/// interval of a pop-empty that overlaps none.
pub fn check_pop_empty(h: &History, d: &[Interval]) -> Result<History, Interval> {
    for op in &h.operations {
        if op.event == Event::PopEmpty && !d.iter().any(|o| o.intersects(&op.interval())) {
            return Err(op.interval());
        }
    }
    Ok(History::new(
        h.adt,
        h.operations.iter().filter(|op| op.event != Event::PopEmpty).copied().collect(),
    ))
}

/// Values whose push meets the first opening and whose pop meets the last.
pub fn extreme_values(vals: &[AttributedValue], d: &[Interval]) -> Vec<Value> {
    let (Some(first), Some(last)) = (d.first(), d.last()) else {
        return Vec::new();
    };
    let mut out: Vec<Value> = vals
        .iter()
        .filter(|a| a.push().intersects(first) && a.pop().intersects(last))
        .map(|a| a.value)
        .collect();
    out.sort_unstable();
    out
}

/// Splits at an opening: values pushed by `alpha.left` go left.
pub fn partition(
    vals: &[AttributedValue],
    alpha: Interval,
) -> (Vec<AttributedValue>, Vec<AttributedValue>) {
    vals.iter().partition(|a| a.push_ret <= alpha.left)
}

/// Decides a stack history, applying differentiation, completion and
/// overlap removal first.
pub fn stack_linearizable(h: &History) -> Verdict {
    stack_linearizable_counted(h).0
}

/// Like [`stack_linearizable`], also returning the number of value visits
/// made across all recursive steps.
pub fn stack_linearizable_counted(h: &History) -> (Verdict, u64) {
    let prepared = match prepare(h) {
        Ok(p) => p,
        Err(v) => return (v, 0),
    };
    let cleaned = remove_overlapping_pairs(&prepared.history).history;
    let mut vals = op_to_val(&cleaned);
    vals.sort_by_key(|a| a.push_ret);
    let mut work = 0;

    if cleaned.operations.iter().any(|op| op.event == Event::PopEmpty) {
        let all: Vec<usize> = (0..vals.len()).collect();
        let p = sweep(&vals, &all, &mut work);
        let span = cleaned.span().expect("history has a pop-empty");
        if let Err(interval) = check_pop_empty(&cleaned, &d_segments(span, &p)) {
            return (Verdict::unlinearizable(Witness::PopEmpty { interval }), work);
        }
    }

    match decide(&vals, &mut work) {
        Ok(()) => (Verdict::linearizable(), work),
        Err(sub) => {
            let mut values: Vec<Value> =
                sub.iter().map(|&i| prepared.original(vals[i].value)).collect();
            values.sort_unstable();
            (Verdict::unlinearizable(Witness::Residual { values }), work)
        }
    }
}

/// Runs the peel-or-split loop over `vals` sorted by push return. Returns
/// the indices of a stuck sub-history on failure.
fn decide(vals: &[AttributedValue], work: &mut u64) -> Result<(), Vec<usize>> {
    let mut pending: Vec<Vec<usize>> = vec![(0..vals.len()).collect()];
    while let Some(sub) = pending.pop() {
        if sub.is_empty() {
            continue;
        }
        let p = sweep(vals, &sub, work);
        let d = d_segments(value_span(vals, &sub, work), &p);
        debug_assert!(alternates(&d, &p));
        let (first, last) = (d[0], d[d.len() - 1]);

        let mut rest = Vec::with_capacity(sub.len());
        for &i in &sub {
            *work += 1;
            let a = &vals[i];
            if !(a.push().intersects(&first) && a.pop().intersects(&last)) {
                rest.push(i);
            }
        }
        if rest.len() < sub.len() {
            pending.push(rest);
            continue;
        }
        if d.len() <= 2 {
            return Err(sub);
        }
        let alpha = d[1];
        // `sub` is in push-return order, so the left part is a prefix.
        let cut = sub.partition_point(|&i| vals[i].push_ret <= alpha.left);
        *work += sub.len() as u64;
        debug_assert!(cut > 0 && cut < sub.len(), "empty side at opening {alpha}");
        let (l, r) = sub.split_at(cut);
        pending.push(l.to_vec());
        pending.push(r.to_vec());
    }
    Ok(())
}

/// Openings and covers alternate, touch end to end and are ordered.
fn alternates(d: &[Interval], p: &[Interval]) -> bool {
    d.len() == p.len() + 1
        && p.iter().enumerate().all(|(i, c)| d[i].right == c.left && c.right == d[i + 1].left)
        && d.iter().chain(p).all(|s| s.left <= s.right)
}
