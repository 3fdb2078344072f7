use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::provenance::ProvenanceReport;
use crate::{Error, Result};

/// Responsible clients per traced input id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth(BTreeMap<usize, BTreeSet<usize>>);

impl GroundTruth {
    pub fn new() -> Self {
        GroundTruth::default()
    }

    /// Records the responsible set of one input; the set must be non-empty.
    pub fn insert(&mut self, input_id: usize, clients: impl IntoIterator<Item = usize>) -> Result<()> {
        let set: BTreeSet<usize> = clients.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Contract(format!("input {input_id}: empty ground-truth set")));
        }
        self.0.insert(input_id, set);
        Ok(())
    }

    pub fn get(&self, input_id: usize) -> Option<&BTreeSet<usize>> {
        self.0.get(&input_id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Provenance accuracy of one round: `m` of `z` evaluated inputs matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    pub round: usize,
    /// Evaluated inputs, including ones that could not be traced.
    pub z: usize,
    pub m: usize,
    /// `m·100/z`; absent when `z = 0`.
    pub accuracy: Option<f64>,
    /// Test accuracy of the round's global model, percent.
    pub global_accuracy: Option<f64>,
    /// Inputs counted as misses because no neuron exceeded the threshold.
    pub untraced: usize,
}

impl AccuracyResult {
    pub fn from_counts(round: usize, z: usize, m: usize) -> Self {
        debug_assert!(m <= z);
        AccuracyResult {
            round,
            z,
            m,
            accuracy: (z > 0).then(|| (100 * m) as f64 / z as f64),
            global_accuracy: None,
            untraced: 0,
        }
    }

    /// Counts `n` inputs that could not be traced as misses.
    pub fn add_untraced(&mut self, n: usize) {
        self.z += n;
        self.untraced += n;
        self.accuracy = (self.z > 0).then(|| (100 * self.m) as f64 / self.z as f64);
    }
}

/// Counts a report as correct when any of its first `match_depth` ranked
/// clients belongs to the input's truth set.
pub fn provenance_accuracy(reports: &[ProvenanceReport], truth: &GroundTruth, match_depth: usize) -> Result<AccuracyResult> {
    let Some(first) = reports.first() else {
        return Err(Error::Degenerate("no reports to score".into()));
    };
    if match_depth == 0 {
        return Err(Error::config("match depth must be positive"));
    }
    let mut m = 0;
    for r in reports {
        let set = truth
            .get(r.input_id)
            .ok_or_else(|| Error::Contract(format!("input {} has no ground truth", r.input_id)))?;
        if r.ranking.iter().take(match_depth).any(|c| set.contains(c)) {
            m += 1;
        }
    }
    Ok(AccuracyResult::from_counts(first.round, reports.len(), m))
}

/// Mean of the per-round accuracies, skipping rounds with `z = 0`.
pub fn mean_accuracy<'a>(results: impl IntoIterator<Item = &'a AccuracyResult>) -> Option<f64> {
    let vals: Vec<f64> = results.into_iter().filter_map(|r| r.accuracy).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
