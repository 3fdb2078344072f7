use std::path::Path;

use serde::Serialize;

use super::{mean_accuracy, provenance_accuracy, select_inputs, trace_round, write_curve, write_json, AccuracyResult, GroundTruth, Selection};
use crate::exec::ExecMode;
use crate::flsim::{FlConfig, Federation, RunStore};
use crate::provenance::TraceOptions;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultRound {
    #[serde(flatten)]
    pub accuracy: AccuracyResult,
    /// Faulty clients among the round's participants.
    pub faulty_participants: Vec<usize>,
    /// Traced inputs whose first `|faulty_participants|` ranked clients are
    /// exactly the faulty participants.
    pub exact: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultLocalizationRun {
    pub faulty_clients: Vec<usize>,
    pub targeted_labels: Vec<usize>,
    pub rounds: Vec<FaultRound>,
}

impl FaultLocalizationRun {
    pub fn mean_accuracy(&self) -> Option<f64> {
        mean_accuracy(self.rounds.iter().map(|r| &r.accuracy))
    }

    /// Mean over rounds with `z > 0` of the exact-set match rate, percent.
    pub fn mean_exact(&self) -> Option<f64> {
        let vals: Vec<f64> = self
            .rounds
            .iter()
            .filter(|r| r.accuracy.z > 0)
            .map(|r| r.exact as f64 * 100.0 / r.accuracy.z as f64)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// `fault_localization.json` and `localization_accuracy.csv` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("fault_localization.json"), self)?;
        write_curve(
            &dir.join("localization_accuracy.csv"),
            "accuracy",
            self.rounds.iter().map(|r| (r.accuracy.round, r.accuracy.accuracy)),
        )
    }
}

/// Per round, traces the misclassified test inputs of the flipped labels and
/// checks whether the round's faulty participants top the ranking.
pub fn fault_localization_run(config: &FlConfig, store: RunStore, exec: ExecMode) -> Result<FaultLocalizationRun> {
    let fault = config
        .fault
        .as_ref()
        .ok_or_else(|| Error::config_field("fault", "fault localization needs a [fault] section"))?;
    if fault.num_faulty(config.num_clients) == 0 || fault.faulty_per_round == 0 {
        return Err(Error::config_field("fault.fraction_faulty", "no faulty clients configured"));
    }
    let mut fed = Federation::new(config.clone(), store)?;
    fed.set_exec(exec);
    let targeted = fault.mapping.flipped_sources();
    let selection = Selection::Flipped { mapping: fault.mapping.clone() };
    let opts = TraceOptions { threshold: config.experiment.threshold, ..Default::default() };
    let mut rounds = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        let (log, snapshot) = fed.run_round()?;
        let faulty_participants: Vec<usize> = log.participants.iter().filter(|m| m.faulty).map(|m| m.client_id).collect();
        let mut accuracy = AccuracyResult::from_counts(log.round, 0, 0);
        let mut exact = 0;
        if !faulty_participants.is_empty() {
            let eval = fed.evaluate_global()?;
            let inputs = select_inputs(&eval, fed.test_set(), &selection, config.experiment.max_traced);
            let traced = trace_round(&snapshot, fed.test_set(), &inputs, &opts, exec)?;
            let depth = faulty_participants.len();
            if !traced.reports.is_empty() {
                let mut truth = GroundTruth::new();
                for r in &traced.reports {
                    truth.insert(r.input_id, faulty_participants.iter().copied())?;
                }
                accuracy = provenance_accuracy(&traced.reports, &truth, depth)?;
                exact = traced
                    .reports
                    .iter()
                    .filter(|r| {
                        let mut top: Vec<usize> = r.ranking.iter().take(depth).copied().collect();
                        top.sort_unstable();
                        top == faulty_participants
                    })
                    .count();
            }
            accuracy.add_untraced(traced.untraced.len());
        }
        accuracy.global_accuracy = Some(log.accuracy);
        rounds.push(FaultRound { accuracy, faulty_participants, exact });
    }
    Ok(FaultLocalizationRun { faulty_clients: fed.faulty_clients().to_vec(), targeted_labels: targeted, rounds })
}
