//! Preprocessing shared by the stack and queue monitors.

use crate::history::{complete_history, differentiate, op_to_val, History, Value, ValueMap};
use crate::verdict::{Verdict, Witness};

pub(crate) struct Prepared {
    /// Differentiated and completed.
    pub history: History,
    pub map: ValueMap,
}

impl Prepared {
    pub fn original(&self, v: Value) -> Value {
        self.map.get(&v).map_or(v, |&(orig, _)| orig)
    }
}

/// Renames reused values and completes unmatched pushes. Inputs that are
/// unlinearizable on their face come back as the verdict.
pub(crate) fn prepare(h: &History) -> Result<Prepared, Verdict> {
    let (diff, map) = differentiate(h)
        .map_err(|e| match e {
            crate::history::DifferentiateError::ExcessPops { value } => {
                Verdict::unlinearizable(Witness::ExcessPop { value })
            }
        })?;
    let history = complete_history(&diff);
    let prepared = Prepared { history, map };
    if let Some(v) = op_to_val(&prepared.history)
        .iter()
        .filter(|a| a.pop_ret < a.push_call)
        .map(|a| a.value)
        .min()
    {
        let value = prepared.original(v);
        return Err(Verdict::unlinearizable(Witness::PoppedBeforePushed { value }));
    }
    Ok(prepared)
}
