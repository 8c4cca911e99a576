//! Size ladders for the monitors, reporting wall time and instrumented work.

use std::fmt::Write as _;
use std::time::Instant;

use crate::generators::{gen_linearizable, GenConfig};
use crate::history::{Adt, History};
use crate::record::{record_execution, ReferenceImpl};

pub const CSV_HEADER: &str = "adt,size,threads,wall_ns,work,slowdown";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub adt: Adt,
    pub size: usize,
    pub threads: usize,
    pub wall_ns: u128,
    pub work: u64,
    /// Wall time relative to the first (smallest) row.
    pub slowdown: f64,
}

/// Sizes `step, 2·step, …` up to `max`.
pub fn ladder(step: usize, max: usize) -> Vec<usize> {
    (1..).map(|k| k * step).take_while(|&n| n <= max).collect()
}

/// Where benchmark histories come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corpus {
    /// Linearizable by construction; the thread count is only reported.
    Generated,
    /// Recorded from a reference implementation with `threads` workers.
    Recorded(ReferenceImpl),
}

impl Corpus {
    fn history(self, cfg: &GenConfig) -> History {
        match self {
            Corpus::Generated => gen_linearizable(cfg),
            Corpus::Recorded(imp) => record_execution(imp, cfg),
        }
    }
}

/// Checks one generated linearizable history per size.
pub fn run_ladder(adt: Adt, sizes: &[usize], base: &GenConfig) -> Vec<BenchRow> {
    run_ladder_on(Corpus::Generated, adt, sizes, base)
}

/// Checks one history per size drawn from `corpus`. Slowdown is relative
/// to the first size, so runs at different thread counts stay comparable.
pub fn run_ladder_on(corpus: Corpus, adt: Adt, sizes: &[usize], base: &GenConfig) -> Vec<BenchRow> {
    let mut rows: Vec<BenchRow> = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let cfg = GenConfig { adt, ops: size, seed: base.seed.wrapping_add(size as u64), ..*base };
        let h = corpus.history(&cfg);
        let started = Instant::now();
        let (verdict, work) = crate::check_counted(&h);
        let wall_ns = started.elapsed().as_nanos().max(1);
        debug_assert!(verdict.linearizable || corpus == Corpus::Recorded(ReferenceImpl::BuggyStack));
        let slowdown = rows.first().map_or(1.0, |r| wall_ns as f64 / r.wall_ns as f64);
        rows.push(BenchRow { adt, size, threads: base.threads, wall_ns, work, slowdown });
    }
    rows
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{},{},{},{:.3}", r.adt, r.size, r.threads, r.wall_ns, r.work, r.slowdown)
            .unwrap();
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_exponent(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| {
        let dx = x.ln() - mx;
        (a + dx * (y.ln() - my), b + dx * dx)
    });
    num / den
}

/// Largest over smallest of the values.
pub fn spread(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi / lo
}
