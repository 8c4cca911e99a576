use std::collections::{BTreeMap, BTreeSet};

use limon_core::generators::{gen_linearizable, gen_random, gen_small_model_family, mutate, GenConfig};
use limon_core::history::{
    complete_history, differentiate, op_to_val, parse_history, project, remove_overlapping_pairs,
    serialize_history, validate, Adt, Event, Format, History, Interval, Outcome, Value,
};
use limon_core::oracle::brute_force_linearizable;
use limon_core::queue::{build_qtree, complete_qtree, find_critical_pair, find_critical_pair_naive, qtree_contains};
use limon_core::record::{record_execution, ReferenceImpl};
use limon_core::set::{history_to_stream, SetMonitor};
use limon_core::stack::{d_segments, p_segments};
use limon_core::{check, check_counted};
use proptest::prelude::*;

fn adt() -> impl Strategy<Value = Adt> {
    prop_oneof![Just(Adt::Stack), Just(Adt::Queue), Just(Adt::Set), Just(Adt::Multiset)]
}

/// A small history of any kind: linearizable, perturbed or arbitrary.
fn history_of(adt: Adt, max_ops: usize) -> impl Strategy<Value = History> {
    (1..=max_ops, 1..=3usize, 0..5u8, any::<u64>(), 0..3u8).prop_map(move |(ops, values, stretch, seed, kind)| {
        let cfg = GenConfig::new(adt, ops, seed).with_values(values).with_stretch(stretch as f64);
        match kind {
            0 => gen_linearizable(&cfg),
            1 => mutate(&gen_linearizable(&cfg), seed).0,
            _ => gen_random(&cfg),
        }
    })
}

fn any_history(max_ops: usize) -> impl Strategy<Value = History> {
    adt().prop_flat_map(move |a| history_of(a, max_ops))
}

fn sorted_by_id(mut h: History) -> History {
    h.operations.sort_by_key(|o| o.id);
    h
}

fn oracle(h: &History) -> bool {
    brute_force_linearizable(h).unwrap().linearizable
}

fn rename(h: &History, f: impl Fn(Value) -> Value) -> History {
    let mut out = h.clone();
    for op in &mut out.operations {
        op.event = match op.event {
            Event::Push(v) => Event::Push(f(v)),
            Event::Pop(v) => Event::Pop(f(v)),
            Event::Add(v, o) => Event::Add(f(v), o),
            Event::Remove(v, o) => Event::Remove(f(v), o),
            Event::Contains(v, a) => Event::Contains(f(v), a),
            Event::PopEmpty => Event::PopEmpty,
        };
    }
    out
}

/// Closed intervals with pairwise distinct endpoints.
fn interval_set(max: usize) -> impl Strategy<Value = Vec<Interval>> {
    (0..=max).prop_flat_map(|n| {
        Just((0..2 * n as u64).collect::<Vec<_>>()).prop_shuffle().prop_map(|pts| {
            pts.chunks(2).map(|c| Interval::new(c[0].min(c[1]), c[0].max(c[1]))).collect()
        })
    })
}

proptest! {
    #[test]
    fn text_formats_round_trip(h in any_history(12)) {
        for format in [Format::Ops, Format::Events] {
            let text = serialize_history(&h, format);
            prop_assert_eq!(Format::detect(&text), format);
            let back = parse_history(&text, format).unwrap();
            prop_assert_eq!(sorted_by_id(back), sorted_by_id(h.clone()));
        }
    }

    #[test]
    fn completion_matches_every_push(h in history_of(Adt::Stack, 12)) {
        let done = complete_history(&h);
        for op in &h.operations {
            prop_assert!(done.operations.contains(op));
        }
        let pushes = done.operations.iter().filter(|o| matches!(o.event, Event::Push(_))).count();
        let pops = done.operations.iter().filter(|o| matches!(o.event, Event::Pop(_))).count();
        prop_assert!(pops >= pushes);
        prop_assert!(validate(&done).iter().all(|v| !v.is_structural()));
    }

    #[test]
    fn completion_keeps_the_verdict(h in prop_oneof![history_of(Adt::Stack, 5), history_of(Adt::Queue, 5)]) {
        prop_assert_eq!(oracle(&h), oracle(&complete_history(&h)));
    }

    #[test]
    fn differentiated_values_occur_once(h in prop_oneof![history_of(Adt::Stack, 12), history_of(Adt::Queue, 12)]) {
        // Reuse values so renaming has something to do.
        let folded = rename(&h, |v| v.rem_euclid(3));
        let Ok((d, map)) = differentiate(&folded) else { return Ok(()) };
        let mut pushes: BTreeMap<Value, usize> = BTreeMap::new();
        let mut pops: BTreeMap<Value, usize> = BTreeMap::new();
        for op in &d.operations {
            match op.event {
                Event::Push(v) => *pushes.entry(v).or_default() += 1,
                Event::Pop(v) => *pops.entry(v).or_default() += 1,
                _ => {}
            }
        }
        prop_assert!(pushes.values().chain(pops.values()).all(|&c| c == 1));
        for op in &d.operations {
            if let Some(v) = op.event.value() {
                let original = map.get(&v).map_or(v, |&(o, _)| o);
                let before = folded.operations.iter().find(|o| o.id == op.id).unwrap();
                prop_assert_eq!(before.event.value(), Some(original));
            }
        }
    }

    #[test]
    fn covers_and_openings_alternate(h in history_of(Adt::Stack, 16)) {
        let Ok((d, _)) = differentiate(&complete_history(&h)) else { return Ok(()) };
        let removal = remove_overlapping_pairs(&d);
        // The monitor rejects these before computing covers.
        prop_assume!(removal.popped_before_pushed.is_none());
        let trimmed = removal.history;
        let vals = op_to_val(&trimmed);
        let Some(span) = trimmed.span() else { return Ok(()) };
        let covers = p_segments(&vals);
        let openings = d_segments(span, &covers);
        prop_assert_eq!(openings.len(), covers.len() + 1);
        for w in covers.windows(2) {
            prop_assert!(w[0].right < w[1].left);
        }
        for (i, c) in covers.iter().enumerate() {
            prop_assert_eq!(openings[i].right, c.left);
            prop_assert_eq!(openings[i + 1].left, c.right);
        }
        for a in &vals {
            if let Some(inner) = a.inner() {
                prop_assert!(covers.iter().any(|c| c.contains(&inner)));
            }
        }
    }

    #[test]
    fn qtree_search_matches_scan(stored in interval_set(64), queries in interval_set(16)) {
        let tagged: Vec<_> = stored.iter().enumerate().map(|(i, &iv)| (iv, i as Value)).collect();
        let mut t = build_qtree(&tagged);
        complete_qtree(&mut t);
        prop_assert!(t.is_valid_red_black());
        prop_assert!(t.high_keys_consistent());
        prop_assert!(t.height() as f64 <= 2.0 * ((stored.len() + 1) as f64).log2());
        // Stored intervals double as queries that share endpoints.
        for q in queries.iter().chain(stored.iter()) {
            match qtree_contains(&t, *q) {
                Some(v) => prop_assert!(stored[v as usize].contains(q)),
                None => prop_assert!(!stored.iter().any(|s| s.contains(q))),
            }
        }
    }

    #[test]
    fn fast_and_naive_pair_search_agree(h in history_of(Adt::Queue, 16)) {
        let Ok((d, _)) = differentiate(&complete_history(&h)) else { return Ok(()) };
        let removal = remove_overlapping_pairs(&d);
        prop_assume!(removal.popped_before_pushed.is_none());
        let vals = op_to_val(&removal.history);
        let fast = find_critical_pair(&vals);
        prop_assert_eq!(fast.is_some(), find_critical_pair_naive(&vals).is_some());
        if let Some(p) = fast {
            prop_assert_ne!(p.inner, p.outer);
            let inner = vals.iter().find(|a| a.value == p.inner).unwrap();
            let outer = vals.iter().find(|a| a.value == p.outer).unwrap();
            prop_assert!(outer.inner().unwrap().contains(&inner.total()));
        }
    }

    #[test]
    fn verdict_ignores_value_names(h in any_history(7)) {
        let renamed = rename(&h, |v| 7 * v + 1000);
        prop_assert_eq!(oracle(&h), oracle(&renamed));
        prop_assert_eq!(check(&h).linearizable, check(&renamed).linearizable);
    }

    #[test]
    fn monitor_acceptance_implies_linearizable_with_reused_values(h in any_history(7)) {
        let folded = rename(&h, |v| v.rem_euclid(2));
        if check(&folded).linearizable {
            prop_assert!(oracle(&folded));
        }
    }

    #[test]
    fn projection_keeps_linearizability(h in any_history(8), keep in proptest::collection::btree_set(-3i64..8, 0..6)) {
        let h = rename(&h, |v| v.rem_euclid(8));
        if h.adt != Adt::Set && h.adt != Adt::Multiset && oracle(&h) {
            // Container histories generated here never reuse values.
            prop_assert!(oracle(&project(&h, &keep, true)));
        }
        if (h.adt == Adt::Set || h.adt == Adt::Multiset) && oracle(&h) {
            prop_assert!(oracle(&project(&h, &keep, false)));
        }
    }

    #[test]
    fn pending_queries_never_exceed_queries(h in history_of(Adt::Set, 40)) {
        let mut m = SetMonitor::new();
        for rec in history_to_stream(&h) {
            m.feed(rec).unwrap();
            prop_assert!(m.pending_queries() as u64 <= m.queries());
        }
    }

    #[test]
    fn multiset_matches_prefix_balance(h in history_of(Adt::Multiset, 40)) {
        let mut events: Vec<(u64, bool, Value)> = Vec::new();
        for op in &h.operations {
            match op.event {
                Event::Add(v, Outcome::Ok) => events.push((op.call, true, v)),
                Event::Remove(v, Outcome::Ok) => events.push((op.ret, false, v)),
                _ => unreachable!(),
            }
        }
        events.sort();
        let mut balance: BTreeMap<Value, i64> = BTreeMap::new();
        let mut ok = true;
        for (_, add, v) in events {
            let b = balance.entry(v).or_default();
            *b += if add { 1 } else { -1 };
            ok &= *b >= 0;
        }
        prop_assert_eq!(check(&h).linearizable, ok);
    }

    #[test]
    fn work_stays_within_envelope(adt in prop_oneof![Just(Adt::Stack), Just(Adt::Queue), Just(Adt::Set)],
                                  n in 1..400usize, seed in any::<u64>(), stretch in 0..6u8) {
        let h = gen_linearizable(&GenConfig::new(adt, n, seed).with_stretch(stretch as f64));
        let (v, work) = check_counted(&h);
        prop_assert!(v.linearizable);
        let n = n as u64;
        let log = 64 - n.leading_zeros() as u64;
        let bound = match adt {
            Adt::Stack => 4 * n * n + 16,
            Adt::Queue => 8 * n * (log + 1) + 16,
            _ => 4 * n + 16,
        };
        prop_assert!(work <= bound, "{adt} n={n} work={work} bound={bound}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn recordings_are_well_formed(imp in prop_oneof![
        Just(ReferenceImpl::LockStack), Just(ReferenceImpl::TreiberStack),
        Just(ReferenceImpl::LockQueue), Just(ReferenceImpl::MsQueue)],
        seed in any::<u64>(), threads in 1..5usize)
    {
        let h = record_execution(imp, &GenConfig::new(imp.adt(), 400, seed).with_threads(threads));
        prop_assert!(validate(&h).is_empty());
        prop_assert!(check(&h).linearizable);
    }
}

#[test]
fn small_model_family_has_no_small_core() {
    for n in 3..=5usize {
        let h = gen_small_model_family(n);
        assert!(!oracle(&h));
        let values: BTreeSet<Value> = (1..=n as Value).collect();
        for v in &values {
            let mut keep = values.clone();
            keep.remove(v);
            assert!(oracle(&project(&h, &keep, true)), "n={n} without {v}");
        }
    }
}
