use std::path::Path;

use super::{
    fuse, read_checkpoint, sample_clients, sample_with_faults, write_checkpoint, CheckpointEntry, ClientMeta, FlConfig,
    Fusion, PoolEntry, RoundLog, RunManifest, RunStore,
};
use crate::data::{flip_labels, Dataset, Partition};
use crate::exec::ExecMode;
use crate::nn::{argmax, train_local, ModelArch, ModelWeights, Proximal, TrainHyper};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub meta: ClientMeta,
    pub weights: ModelWeights,
}

/// The fused global model of one round together with the client models it
/// was fused from.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSnapshot {
    pub round: usize,
    pub arch: ModelArch,
    pub global: ModelWeights,
    /// Ascending client id.
    pub clients: Vec<ClientState>,
}

impl RoundSnapshot {
    pub fn load(store: &RunStore, round: usize) -> Result<Self> {
        let manifest = store.read_manifest()?;
        let log = store.read_round_log(round)?;
        let arch = manifest.arch;
        let global = read_checkpoint(&store.path(&log.global_checkpoint), &arch)?;
        let clients = log
            .participants
            .iter()
            .map(|m| {
                let rel = log.client_checkpoints.get(&m.client_id).ok_or_else(|| {
                    Error::format(store.root(), format!("round {round} lists client {} without a checkpoint", m.client_id))
                })?;
                Ok(ClientState { meta: *m, weights: read_checkpoint(&store.path(rel), &arch)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RoundSnapshot { round, arch, global, clients })
    }

    pub fn metas(&self) -> Vec<ClientMeta> {
        self.clients.iter().map(|c| c.meta).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Percent of test rows classified correctly.
    pub accuracy: f64,
    /// Percent per label; `None` for labels absent from the test set.
    pub per_label: Vec<Option<f64>>,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    /// Pooled accuracy over the test rows of `labels`.
    pub fn accuracy_over(&self, test: &Dataset, labels: &[usize]) -> Option<f64> {
        let rows: Vec<usize> = (0..test.len()).filter(|&r| labels.contains(&test.label(r))).collect();
        if rows.is_empty() {
            return None;
        }
        let hits = rows.iter().filter(|&&r| self.predictions[r] == test.label(r)).count();
        Some(hits as f64 * 100.0 / rows.len() as f64)
    }
}

pub fn evaluate(arch: &ModelArch, weights: &ModelWeights, test: &Dataset, exec: ExecMode) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::config("test set is empty"));
    }
    let rows: Vec<usize> = (0..test.len()).collect();
    let predictions = exec
        .map(&rows, |&r| arch.logits(weights, test.features(r)).map(|l| argmax(l.data())))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut hits = vec![0usize; test.num_classes()];
    let mut totals = vec![0usize; test.num_classes()];
    for (r, &p) in predictions.iter().enumerate() {
        let l = test.label(r);
        totals[l] += 1;
        hits[l] += usize::from(p == l);
    }
    let correct: usize = hits.iter().sum();
    Ok(Evaluation {
        accuracy: correct as f64 * 100.0 / test.len() as f64,
        per_label: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 * 100.0 / t as f64))
            .collect(),
        predictions,
    })
}

/// Coordinator state for one federated run.
#[derive(Debug)]
pub struct Federation {
    config: FlConfig,
    arch: ModelArch,
    train: Dataset,
    test: Dataset,
    partitions: Vec<Partition>,
    overlays: Vec<Option<Vec<usize>>>,
    faulty: Vec<usize>,
    global: ModelWeights,
    completed: usize,
    store: RunStore,
    manifest: RunManifest,
    exec: ExecMode,
}

impl Federation {
    /// Loads data from the config and writes the initial checkpoint.
    pub fn new(config: FlConfig, store: RunStore) -> Result<Self> {
        config.validate()?;
        let (train, test) = config.dataset.load(config.seed)?;
        Self::with_data(config, train, test, store)
    }

    pub fn with_data(config: FlConfig, train: Dataset, test: Dataset, store: RunStore) -> Result<Self> {
        config.validate()?;
        if train.num_classes() != test.num_classes() || train.sample_shape() != test.sample_shape() {
            return Err(Error::config_field("dataset", "train and test splits disagree on shape or class count"));
        }
        let arch = config.model.build(train.sample_shape(), train.num_classes())?;
        let partitions = config.partition(&train)?;
        let (faulty, overlays) = match &config.fault {
            Some(f) => {
                f.validate(train.num_classes())?;
                let faulty = f.faulty_clients(partitions.len(), config.seed);
                let overlays = partitions
                    .iter()
                    .map(|p| {
                        faulty
                            .binary_search(&p.client_id)
                            .is_ok()
                            .then(|| flip_labels(p, &train, &f.mapping).map(|o| o.labels))
                            .transpose()
                    })
                    .collect::<Result<Vec<_>>>()?;
                (faulty, overlays)
            }
            None => (Vec::new(), vec![None; partitions.len()]),
        };
        let global = ModelWeights::uniform(&arch, config.init_scale, &mut seed::rng(seed::derive(config.seed, &[seed::STREAM_INIT])));
        write_checkpoint(&store.path(&RunStore::global_rel(0)), &arch, &global)?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            arch: arch.clone(),
            config: config.clone(),
            checkpoints: vec![CheckpointEntry { round: 0, global: RunStore::global_rel(0), clients: Vec::new() }],
        };
        store.write_manifest(&manifest)?;
        Ok(Federation {
            config,
            arch,
            train,
            test,
            partitions,
            overlays,
            faulty,
            global,
            completed: 0,
            store,
            manifest,
            exec: ExecMode::default(),
        })
    }

    pub fn set_exec(&mut self, exec: ExecMode) {
        self.exec = exec;
    }

    pub fn exec(&self) -> ExecMode {
        self.exec
    }

    pub fn config(&self) -> &FlConfig {
        &self.config
    }

    pub fn arch(&self) -> &ModelArch {
        &self.arch
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    /// Ascending ids of the label-flipped clients.
    pub fn faulty_clients(&self) -> &[usize] {
        &self.faulty
    }

    pub fn global(&self) -> &ModelWeights {
        &self.global
    }

    pub fn completed_rounds(&self) -> usize {
        self.completed
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    pub fn pool(&self) -> Vec<PoolEntry> {
        self.partitions
            .iter()
            .map(|p| PoolEntry {
                client_id: p.client_id,
                n_k: p.len(),
                faulty: self.faulty.binary_search(&p.client_id).is_ok(),
            })
            .collect()
    }

    /// Runs the next round with every client eligible.
    pub fn run_round(&mut self) -> Result<(RoundLog, RoundSnapshot)> {
        let k = self.config.clients_per_round;
        self.run_round_with(|_| true, k)
    }

    /// Runs the next round sampling `k` participants among clients accepted
    /// by `allow` (and holding at least `batch_size` rows).
    pub fn run_round_with(&mut self, allow: impl Fn(usize) -> bool, k: usize) -> Result<(RoundLog, RoundSnapshot)> {
        let round = self.completed + 1;
        let cfg = &self.config;
        let pool: Vec<PoolEntry> = self.pool().into_iter().filter(|e| allow(e.client_id)).collect();
        let round_seed = seed::derive(cfg.seed, &[round as u64]);
        let selected = match &cfg.fault {
            Some(f) => sample_with_faults(&pool, k, cfg.batch_size, f.faulty_per_round, round_seed)?,
            None => sample_clients(&pool, k, cfg.batch_size, round_seed)?,
        };
        let entries: Vec<PoolEntry> = selected.iter().map(|&id| pool.iter().find(|e| e.client_id == id).copied().expect("sampled from pool")).collect();
        let metas = ClientMeta::weigh(&entries);

        let prox_mu = match cfg.fusion {
            Fusion::FedAvg => None,
            Fusion::FedProx { mu } => Some(mu),
        };
        let trained = self
            .exec
            .map(&metas, |m| {
                let part = &self.partitions[m.client_id];
                let view = self.train.view(&part.indices, self.overlays[m.client_id].as_deref());
                let hyper = TrainHyper {
                    lr: cfg.lr,
                    epochs: cfg.local_epochs,
                    batch_size: cfg.batch_size,
                    seed: seed::derive(cfg.seed, &[round as u64, m.client_id as u64]),
                };
                let prox = prox_mu.map(|mu| Proximal { mu, reference: &self.global });
                train_local(&self.arch, &self.global, &view, hyper, prox)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;

        let refs: Vec<&ModelWeights> = trained.iter().collect();
        let global = fuse(&refs, &metas)?;
        let eval = evaluate(&self.arch, &global, &self.test, self.exec)?;

        let global_rel = RunStore::global_rel(round);
        write_checkpoint(&self.store.path(&global_rel), &self.arch, &global)?;
        let mut client_checkpoints = std::collections::BTreeMap::new();
        for (m, w) in metas.iter().zip(&trained) {
            let rel = RunStore::client_rel(round, m.client_id);
            write_checkpoint(&self.store.path(&rel), &self.arch, w)?;
            client_checkpoints.insert(m.client_id, rel);
        }
        let log = RoundLog {
            round,
            participants: metas.clone(),
            global_checkpoint: global_rel.clone(),
            client_checkpoints: client_checkpoints.clone(),
            accuracy: eval.accuracy,
            per_label_accuracy: eval.per_label,
        };
        self.store.write_round_log(&log)?;
        self.manifest.checkpoints.push(CheckpointEntry {
            round,
            global: global_rel,
            clients: client_checkpoints.into_values().collect(),
        });
        self.store.write_manifest(&self.manifest)?;

        self.global = global.clone();
        self.completed = round;
        let snapshot = RoundSnapshot {
            round,
            arch: self.arch.clone(),
            global,
            clients: metas.into_iter().zip(trained).map(|(meta, weights)| ClientState { meta, weights }).collect(),
        };
        Ok((log, snapshot))
    }

    /// Test-set evaluation of the current global model.
    pub fn evaluate_global(&self) -> Result<Evaluation> {
        evaluate(&self.arch, &self.global, &self.test, self.exec)
    }
}

/// Runs `config.rounds` rounds into a fresh run directory at `out`.
pub fn run_training(config: &FlConfig, out: &Path, overwrite: bool) -> Result<Vec<RoundLog>> {
    let store = RunStore::create(out, overwrite)?;
    let mut fed = Federation::new(config.clone(), store)?;
    (0..config.rounds).map(|_| fed.run_round().map(|(log, _)| log)).collect()
}
