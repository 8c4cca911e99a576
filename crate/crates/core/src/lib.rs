//! Linearizability monitors for concurrent stack, queue, set and multiset
//! histories.
//!
//! The monitors run in polynomial time: quadratic for stacks, `n log n` for
//! queues and linear for sets and multisets. An exponential [`oracle`]
//! serves as ground truth for small inputs, and [`generators`] and
//! [`record`] produce histories to feed them.
//!
//! ```
//! use limon_core::history::{parse_history, Format};
//! use limon_core::check;
//!
//! let h = parse_history("adt stack\npush 0 0 2\npush 1 1 3\npop 1 4 6\npop 0 5 7\n", Format::Ops)?;
//! assert!(check(&h).linearizable);
//! # Ok::<(), limon_core::history::ParseError>(())
//! ```

pub mod bench;
pub mod generators;
pub mod history;
pub mod oracle;
mod prep;
pub mod queue;
pub mod record;
pub mod set;
pub mod stack;
pub mod verdict;

pub use verdict::{SetFailure, Verdict, Witness};

use history::{Adt, History};

/// Runs the monitor matching the history's ADT.
pub fn check(h: &History) -> Verdict {
    check_counted(h).0
}

/// Like [`check`], also returning the monitor's instrumented work count.
pub fn check_counted(h: &History) -> (Verdict, u64) {
    match h.adt {
        Adt::Stack => stack::stack_linearizable_counted(h),
        Adt::Queue => queue::queue_linearizable_counted(h),
        Adt::Set => set::set_linearizable_counted(h),
        Adt::Multiset => set::multiset_linearizable_counted(h),
    }
}
