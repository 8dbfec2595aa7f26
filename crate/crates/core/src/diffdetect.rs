//! Execution-difference detection over variable-value traces.
//!
//! A common variable exhibits a unique value when one version assigns it a
//! rendering that the other version never assigns to that variable. For each
//! (version, variable) only the earliest such event is kept.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::runner::TraceRecord;
use crate::subject::{ExecutionDifference, Version};

/// Names of variables that occur in both traces.
pub fn common_variables(trace_p: &TraceRecord, trace_q: &TraceRecord) -> BTreeSet<String> {
    let in_q: HashSet<&str> = trace_q.events.iter().map(|e| e.var_name.as_str()).collect();
    trace_p
        .events
        .iter()
        .filter(|e| in_q.contains(e.var_name.as_str()))
        .map(|e| e.var_name.clone())
        .collect()
}

fn value_sets(trace: &TraceRecord) -> HashMap<&str, HashSet<&str>> {
    let mut sets: HashMap<&str, HashSet<&str>> = HashMap::new();
    for e in &trace.events {
        sets.entry(&e.var_name).or_default().insert(&e.value_repr);
    }
    sets
}

fn first_unique(
    version: Version,
    own: &TraceRecord,
    other_sets: &HashMap<&str, HashSet<&str>>,
    out: &mut Vec<ExecutionDifference>,
) {
    let mut reported: HashSet<&str> = HashSet::new();
    for e in &own.events {
        let Some(other_values) = other_sets.get(e.var_name.as_str()) else {
            continue; // not a common variable
        };
        if reported.contains(e.var_name.as_str()) || other_values.contains(e.value_repr.as_str()) {
            continue;
        }
        reported.insert(&e.var_name);
        out.push(ExecutionDifference {
            version,
            var_name: e.var_name.clone(),
            value_repr: e.value_repr.clone(),
            seq: e.seq,
        });
    }
}

/// Earliest unique value per (version, common variable), ordered by seq.
///
/// Equal seq numbers put P first. Swapping the traces therefore swaps the
/// version tags and may reorder same-seq entries.
pub fn unique_variable_values(
    trace_p: &TraceRecord,
    trace_q: &TraceRecord,
) -> Vec<ExecutionDifference> {
    let sets_p = value_sets(trace_p);
    let sets_q = value_sets(trace_q);
    let mut out = Vec::new();
    first_unique(Version::P, trace_p, &sets_q, &mut out);
    first_unique(Version::Q, trace_q, &sets_p, &mut out);
    // Stable: within one version seq is already unique.
    out.sort_by_key(|d| (d.seq, d.version != Version::P));
    out
}

/// Differences plus whether either trace was cut at the event cap.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecDiffReport {
    pub differences: Vec<ExecutionDifference>,
    pub from_truncated_trace: bool,
}

pub fn analyze(trace_p: &TraceRecord, trace_q: &TraceRecord) -> ExecDiffReport {
    ExecDiffReport {
        differences: unique_variable_values(trace_p, trace_q),
        from_truncated_trace: trace_p.truncated || trace_q.truncated,
    }
}

/// One line per difference; empty input renders as the empty string.
pub fn format_exec_diff(diffs: &[ExecutionDifference]) -> String {
    diffs
        .iter()
        .map(|d| {
            format!(
                "In version {}, variable {} takes value {}, which never occurs in the other version.",
                d.version, d.var_name, d.value_repr
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subject::VarEvent;

    pub(crate) fn trace(events: &[(&str, &str)]) -> TraceRecord {
        TraceRecord::new(
            events
                .iter()
                .enumerate()
                .map(|(i, (v, val))| VarEvent {
                    var_name: v.to_string(),
                    value_repr: val.to_string(),
                    seq: i as u64,
                })
                .collect(),
        )
    }

    #[test]
    fn common_variable_examples() {
        let p = trace(&[("x", "1"), ("n", "2")]);
        let q = trace(&[("x", "1"), ("m", "2")]);
        assert_eq!(common_variables(&p, &q), BTreeSet::from(["x".to_string()]));
        assert_eq!(common_variables(&p, &p).len(), 2);
        let r = trace(&[("z", "1")]);
        assert!(common_variables(&p, &r).is_empty());
    }

    #[test]
    fn triangle_like_n_values() {
        let p = trace(&[("n", "100"), ("n", "300")]);
        let q = trace(&[("n", "100"), ("n", "200")]);
        let diffs = unique_variable_values(&p, &q);
        let got: Vec<_> =
            diffs.iter().map(|d| (d.version, d.var_name.as_str(), d.value_repr.as_str())).collect();
        assert_eq!(got, vec![(Version::P, "n", "300"), (Version::Q, "n", "200")]);
    }

    #[test]
    fn no_differences_cases() {
        let p = trace(&[("n", "1"), ("n", "2"), ("k", "0")]);
        assert!(unique_variable_values(&p, &p).is_empty());
        let reordered = trace(&[("k", "0"), ("n", "2"), ("n", "1"), ("n", "2")]);
        assert!(unique_variable_values(&p, &reordered).is_empty());
    }

    #[test]
    fn only_first_unique_value_per_variable() {
        let p = trace(&[("i", "0"), ("i", "5"), ("i", "6")]);
        let q = trace(&[("i", "0")]);
        let diffs = unique_variable_values(&p, &q);
        assert_eq!(diffs.len(), 1);
        assert_eq!(diffs[0].value_repr, "5");
        assert_eq!(diffs[0].seq, 1);
    }

    #[test]
    fn non_common_variables_ignored() {
        let p = trace(&[("a", "1"), ("b", "9")]);
        let q = trace(&[("a", "1")]);
        assert!(unique_variable_values(&p, &q).is_empty());
    }

    #[test]
    fn formatting() {
        assert_eq!(format_exec_diff(&[]), "");
        let d = |v, val: &str, seq| ExecutionDifference {
            version: v,
            var_name: "n".into(),
            value_repr: val.into(),
            seq,
        };
        assert_eq!(
            format_exec_diff(&[d(Version::P, "300", 1)]),
            "In version P, variable n takes value 300, which never occurs in the other version."
        );
        let two = format_exec_diff(&[d(Version::P, "300", 1), d(Version::Q, "200", 3)]);
        let lines: Vec<_> = two.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("In version Q, variable n takes value 200"));
    }

    #[test]
    fn truncation_is_flagged() {
        let p = trace(&[("n", "1")]);
        let mut q = trace(&[("n", "2")]);
        q.truncated = true;
        let report = analyze(&p, &q);
        assert!(report.from_truncated_trace);
        assert_eq!(report.differences.len(), 2);
    }
}
