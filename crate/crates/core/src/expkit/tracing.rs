use crate::data::{Dataset, LabelMapping, Partition};
use crate::exec::ExecMode;
use crate::flsim::{Evaluation, RoundSnapshot};
use crate::provenance::{trace, ProvenanceReport, TraceOptions};
use crate::{Error, Result};

use super::GroundTruth;

/// Which test inputs an experiment traces.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// Inputs the global model classifies correctly.
    Correct,
    /// Misclassified inputs whose true label is one of `labels`.
    Misclassified { labels: Vec<usize> },
    /// Inputs of a flipped label predicted as exactly the label it is
    /// flipped to.
    Flipped { mapping: LabelMapping },
}

/// Test rows matching `selection`, ascending, at most `max` of them.
pub fn select_inputs(eval: &Evaluation, test: &Dataset, selection: &Selection, max: Option<usize>) -> Vec<usize> {
    (0..test.len())
        .filter(|&r| {
            let (pred, label) = (eval.predictions[r], test.label(r));
            match selection {
                Selection::Correct => pred == label,
                Selection::Misclassified { labels } => pred != label && labels.contains(&label),
                Selection::Flipped { mapping } => pred != label && mapping.apply(label) == pred,
            }
        })
        .take(max.unwrap_or(usize::MAX))
        .collect()
}

/// Reports of one round, plus the inputs whose activated set was empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedRound {
    pub reports: Vec<ProvenanceReport>,
    pub untraced: Vec<usize>,
}

/// Traces test rows `inputs` against `snapshot`. Inputs are independent and
/// run through `exec`; output order follows `inputs`.
pub fn trace_round(
    snapshot: &RoundSnapshot,
    test: &Dataset,
    inputs: &[usize],
    opts: &TraceOptions,
    exec: ExecMode,
) -> Result<TracedRound> {
    let results = exec.map(inputs, |&row| trace(snapshot, row, test.features(row), Some(test.label(row)), opts));
    let mut out = TracedRound { reports: Vec::with_capacity(inputs.len()), untraced: Vec::new() };
    for (&row, r) in inputs.iter().zip(results) {
        match r {
            Ok(report) => out.reports.push(report),
            Err(Error::Degenerate(_)) => out.untraced.push(row),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Truth for correct-prediction tracing: the round's participants holding
/// at least one training row of the predicted label.
pub fn holders_truth(reports: &[ProvenanceReport], snapshot: &RoundSnapshot, partitions: &[Partition]) -> Result<GroundTruth> {
    let mut truth = GroundTruth::new();
    for r in reports {
        let holders: Vec<usize> = snapshot
            .clients
            .iter()
            .map(|c| c.meta.client_id)
            .filter(|&id| partitions[id].holds_label(r.predicted_label))
            .collect();
        if holders.is_empty() {
            return Err(Error::Degenerate(format!(
                "round {}: no participant holds label {}",
                snapshot.round, r.predicted_label
            )));
        }
        truth.insert(r.input_id, holders)?;
    }
    Ok(truth)
}
