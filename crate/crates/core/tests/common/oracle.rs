//! Exhaustive reference for unique-value differencing.

use diffexpose::runner::TraceRecord;
use diffexpose::subject::{ExecutionDifference, Version};

/// Materializes every value set, then for each event checks the whole other
/// trace and the events already seen.
pub fn oracle(p: &TraceRecord, q: &TraceRecord) -> Vec<ExecutionDifference> {
    let mut out = Vec::new();
    for (version, own, other) in [(Version::P, p, q), (Version::Q, q, p)] {
        for (i, e) in own.events.iter().enumerate() {
            let common = other.events.iter().any(|o| o.var_name == e.var_name);
            let absent = !other
                .events
                .iter()
                .any(|o| o.var_name == e.var_name && o.value_repr == e.value_repr);
            let earlier_unique = own.events[..i].iter().any(|prev| {
                prev.var_name == e.var_name
                    && !other
                        .events
                        .iter()
                        .any(|o| o.var_name == prev.var_name && o.value_repr == prev.value_repr)
            });
            if common && absent && !earlier_unique {
                out.push(ExecutionDifference {
                    version,
                    var_name: e.var_name.clone(),
                    value_repr: e.value_repr.clone(),
                    seq: e.seq,
                });
            }
        }
    }
    out.sort_by_key(|d| (d.seq, d.version == Version::Q));
    out
}
