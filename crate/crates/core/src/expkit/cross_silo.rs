use std::path::Path;

use serde::Serialize;

use super::{holders_truth, mean_accuracy, provenance_accuracy, select_inputs, trace_round, write_curve, write_json, AccuracyResult, Selection};
use crate::exec::ExecMode;
use crate::flsim::{FlConfig, Federation, PartitionSpec, RunStore};
use crate::provenance::{heatmap, HeatmapMatrix, TraceOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossSiloRun {
    pub rounds: Vec<AccuracyResult>,
    /// Label × client mean confidence, averaged over every traced round.
    #[serde(skip)]
    pub heatmap: Option<HeatmapMatrix>,
}

impl CrossSiloRun {
    pub fn mean_accuracy_last(&self, n: usize) -> Option<f64> {
        mean_accuracy(&self.rounds[self.rounds.len().saturating_sub(n)..])
    }

    /// `cross_silo.json`, `provenance_accuracy.csv` and `heatmap.csv` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("cross_silo.json"), self)?;
        write_curve(&dir.join("provenance_accuracy.csv"), "accuracy", self.rounds.iter().map(|r| (r.round, r.accuracy)))?;
        if let Some(h) = &self.heatmap {
            crate::flsim::write_atomic(&dir.join("heatmap.csv"), h.to_csv().as_bytes())?;
        }
        Ok(())
    }
}

/// Every client holds a disjoint label group and participates in every
/// round; correct predictions are traced back to the label holder.
pub fn cross_silo_run(config: &FlConfig, store: RunStore, exec: ExecMode) -> Result<CrossSiloRun> {
    if !matches!(config.partition, PartitionSpec::LabelGroups { .. }) {
        return Err(Error::config_field("partition", "cross-silo needs a label_groups partition"));
    }
    if config.clients_per_round != config.num_clients {
        return Err(Error::config_field("clients_per_round", "cross-silo needs every client in every round"));
    }
    let mut fed = Federation::new(config.clone(), store)?;
    fed.set_exec(exec);
    let opts = TraceOptions { threshold: config.experiment.threshold, ..Default::default() };
    let mut rounds = Vec::with_capacity(config.rounds);
    let mut maps = Vec::new();
    for _ in 0..config.rounds {
        let (log, snapshot) = fed.run_round()?;
        let eval = fed.evaluate_global()?;
        let inputs = select_inputs(&eval, fed.test_set(), &Selection::Correct, config.experiment.max_traced);
        let traced = trace_round(&snapshot, fed.test_set(), &inputs, &opts, exec)?;
        let mut acc = if traced.reports.is_empty() {
            AccuracyResult::from_counts(log.round, 0, 0)
        } else {
            let truth = holders_truth(&traced.reports, &snapshot, fed.partitions())?;
            let participants: Vec<usize> = log.participants.iter().map(|m| m.client_id).collect();
            maps.push(heatmap(&traced.reports, &participants)?);
            provenance_accuracy(&traced.reports, &truth, 1)?
        };
        acc.add_untraced(traced.untraced.len());
        acc.global_accuracy = Some(log.accuracy);
        rounds.push(acc);
    }
    let heatmap = (!maps.is_empty()).then(|| HeatmapMatrix::mean(&maps)).transpose()?;
    Ok(CrossSiloRun { rounds, heatmap })
}
