use std::path::Path;

use serde::Serialize;

use super::{write_curve, write_json};
use crate::exec::ExecMode;
use crate::flsim::{FlConfig, Federation, PartitionSpec, RunStore};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForgettingRound {
    pub round: usize,
    pub participants: Vec<usize>,
    /// Test accuracy of the global model, percent.
    pub overall: f64,
    /// Test accuracy on the excluded cluster's labels, percent.
    pub excluded: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForgettingRun {
    pub excluded_clients: Vec<usize>,
    pub excluded_labels: Vec<usize>,
    pub exclude_after: usize,
    pub rounds: Vec<ForgettingRound>,
}

impl ForgettingRun {
    pub fn round(&self, round: usize) -> Option<&ForgettingRound> {
        self.rounds.iter().find(|r| r.round == round)
    }

    /// `forgetting.json`, `accuracy_overall.csv` and `accuracy_excluded.csv` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("forgetting.json"), self)?;
        write_curve(&dir.join("accuracy_overall.csv"), "accuracy", self.rounds.iter().map(|r| (r.round, Some(r.overall))))?;
        write_curve(&dir.join("accuracy_excluded.csv"), "accuracy", self.rounds.iter().map(|r| (r.round, r.excluded)))
    }
}

/// Two label clusters; after round `experiment.exclude_after` the first
/// cluster's clients stop participating.
pub fn forgetting_run(config: &FlConfig, store: RunStore, exec: ExecMode) -> Result<ForgettingRun> {
    let PartitionSpec::Clusters { clusters } = &config.partition else {
        return Err(Error::config_field("partition", "forgetting needs a clusters partition"));
    };
    if clusters.len() != 2 {
        return Err(Error::config_field("partition.clusters", "forgetting needs exactly two clusters"));
    }
    let per_cluster = config.num_clients / 2;
    let excluded_clients: Vec<usize> = (0..per_cluster).collect();
    let excluded_labels = clusters[0].clone();
    let mut fed = Federation::new(config.clone(), store)?;
    fed.set_exec(exec);
    let mut rounds = Vec::with_capacity(config.rounds);
    for r in 1..=config.rounds {
        let (log, _) = if r <= config.experiment.exclude_after {
            fed.run_round()?
        } else {
            let k = config.clients_per_round.min(config.num_clients - per_cluster);
            fed.run_round_with(|id| id >= per_cluster, k)?
        };
        let eval = fed.evaluate_global()?;
        rounds.push(ForgettingRound {
            round: log.round,
            participants: log.participants.iter().map(|m| m.client_id).collect(),
            overall: log.accuracy,
            excluded: eval.accuracy_over(fed.test_set(), &excluded_labels),
        });
    }
    Ok(ForgettingRun { excluded_clients, excluded_labels, exclude_after: config.experiment.exclude_after, rounds })
}
