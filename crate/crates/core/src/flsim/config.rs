use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, FaultSpec, Partition};
use crate::nn::{Layer, ModelArch};
use crate::{seed, Error, Result};

/// Server fusion rule. FedProx shares FedAvg's server step; `mu` only
/// changes client-side training.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Fusion {
    #[default]
    FedAvg,
    FedProx {
        #[serde(default = "default_mu")]
        mu: f64,
    },
}

fn default_mu() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Mlp {
        hidden: Vec<usize>,
    },
    Lenet {
        channels: Vec<usize>,
        #[serde(default = "default_kernel")]
        kernel: usize,
        #[serde(default)]
        hidden: Vec<usize>,
    },
    Layers {
        layers: Vec<Layer>,
    },
}

fn default_kernel() -> usize {
    5
}

impl ModelSpec {
    pub fn build(&self, sample_shape: &[usize], num_classes: usize) -> Result<ModelArch> {
        match self {
            ModelSpec::Mlp { hidden } => ModelArch::mlp(sample_shape.to_vec(), hidden, num_classes),
            ModelSpec::Lenet { channels, kernel, hidden } => {
                ModelArch::lenet(sample_shape.to_vec(), channels, *kernel, hidden, num_classes)
            }
            ModelSpec::Layers { layers } => ModelArch::new(sample_shape.to_vec(), layers.clone(), num_classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Synthetic Gaussian blobs; train and test rows share class centers.
    Blobs {
        num_classes: usize,
        per_class: usize,
        test_per_class: usize,
        dim: usize,
        spread: f64,
    },
    /// IDX image/label files (optionally gzipped). Relative paths resolve
    /// against the config file's directory.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "default_idx_classes")]
        num_classes: usize,
        /// Keep only the first rows of each split.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_train: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_test: Option<usize>,
    },
}

fn default_idx_classes() -> usize {
    10
}

impl DatasetSpec {
    /// Loads `(train, test)`.
    pub fn load(&self, master_seed: u64) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSpec::Blobs { num_classes, per_class, test_per_class, dim, spread } => {
                let all = data::synth_blobs(
                    *num_classes,
                    per_class + test_per_class,
                    *dim,
                    *spread,
                    seed::derive(master_seed, &[seed::STREAM_DATASET]),
                )?;
                let (mut train, mut test) = (Vec::new(), Vec::new());
                for rows in all.rows_by_class() {
                    train.extend_from_slice(&rows[..*per_class]);
                    test.extend_from_slice(&rows[*per_class..]);
                }
                if test.is_empty() {
                    return Err(Error::config_field("dataset.test_per_class", "must be positive"));
                }
                Ok((all.subset(&train), all.subset(&test)))
            }
            DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, num_classes, max_train, max_test } => {
                let cap = |d: Dataset, max: &Option<usize>| -> Result<Dataset> {
                    let d = d.with_num_classes(*num_classes)?;
                    Ok(match max {
                        Some(m) if *m < d.len() => d.subset(&(0..*m).collect::<Vec<_>>()),
                        _ => d,
                    })
                };
                let train = cap(data::load_idx(train_images, train_labels)?, max_train)?;
                let test = cap(data::load_idx(test_images, test_labels)?, max_test)?;
                Ok((train, test))
            }
        }
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, .. } = self {
            for p in [train_images, train_labels, test_images, test_labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    /// Per-class Dirichlet(`alpha`) split over all clients.
    #[default]
    Dirichlet,
    /// Client `i` holds exactly the labels in `groups[i]`.
    LabelGroups { groups: Vec<Vec<usize>> },
    /// Disjoint label clusters; clients are split evenly across clusters and
    /// each cluster's rows are Dirichlet(`alpha`)-split among its clients.
    Clusters { clusters: Vec<Vec<usize>> },
}

/// Knobs read only by the experiment protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Forgetting: last round in which the first cluster still participates.
    #[serde(default = "default_exclude_after")]
    pub exclude_after: usize,
    /// Upper bound on traced test inputs per round (first rows in test order).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_traced: Option<usize>,
    /// Activation threshold for tracing.
    #[serde(default)]
    pub threshold: f64,
}

fn default_exclude_after() -> usize {
    10
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec { exclude_after: default_exclude_after(), max_traced: None, threshold: 0.0 }
    }
}

fn default_clients_per_round() -> usize {
    10
}
fn default_alpha() -> f64 {
    0.1
}
fn default_lr() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    4
}
fn default_batch() -> usize {
    16
}
fn default_init_scale() -> f64 {
    0.05
}

/// Full description of a federated run. Parsed from TOML; the echo stored in
/// a run manifest reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlConfig {
    pub seed: u64,
    pub rounds: usize,
    pub num_clients: usize,
    #[serde(default = "default_clients_per_round")]
    pub clients_per_round: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub local_epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Initial global weights are drawn from `U[-init_scale, init_scale]`.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub fusion: Fusion,
    pub model: ModelSpec,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub partition: PartitionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultSpec>,
    #[serde(default)]
    pub experiment: ExperimentSpec,
}

impl FlConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: FlConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            // serde reports missing fields as "missing field `name`"
            let field = msg.split('`').nth(1).map(str::to_string);
            Error::Config { field, message: msg }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = FlConfig::from_toml(&text)?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let dir = dir.canonicalize().map_err(|e| Error::io(dir, e))?;
        cfg.dataset.resolve_paths(&dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let f = Error::config_field;
        if self.num_clients == 0 {
            return Err(f("num_clients", "must be positive"));
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.num_clients {
            return Err(f("clients_per_round", "must be in 1..=num_clients"));
        }
        if self.local_epochs == 0 {
            return Err(f("local_epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(f("batch_size", "must be positive"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(f("lr", "must be finite and non-negative"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(f("alpha", "must be positive"));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(f("init_scale", "must be finite and non-negative"));
        }
        if let Fusion::FedProx { mu } = self.fusion {
            if !(mu.is_finite() && mu >= 0.0) {
                return Err(f("fusion.mu", "must be finite and non-negative"));
            }
        }
        match &self.partition {
            PartitionSpec::Dirichlet => {}
            PartitionSpec::LabelGroups { groups } => {
                if groups.len() != self.num_clients {
                    return Err(f("partition.groups", "needs one label group per client"));
                }
            }
            PartitionSpec::Clusters { clusters } => {
                if clusters.is_empty() || self.num_clients % clusters.len() != 0 {
                    return Err(f("partition.clusters", "num_clients must split evenly across clusters"));
                }
            }
        }
        Ok(())
    }

    pub fn partition(&self, train: &Dataset) -> Result<Vec<Partition>> {
        let s = seed::derive(self.seed, &[seed::STREAM_PARTITION]);
        match &self.partition {
            PartitionSpec::Dirichlet => data::dirichlet_partition(train, self.num_clients, self.alpha, s),
            PartitionSpec::LabelGroups { groups } => data::label_group_partition(train, groups),
            PartitionSpec::Clusters { clusters } => {
                data::cluster_partition(train, clusters, self.num_clients / clusters.len(), self.alpha, s)
            }
        }
    }
}
