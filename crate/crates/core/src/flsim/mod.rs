//! Round-based federated training: client sampling, local training,
//! FedAvg/FedProx fusion, checkpointing and evaluation.

mod checkpoint;
mod config;
mod federation;
mod fusion;
mod store;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use config::{DatasetSpec, ExperimentSpec, FlConfig, Fusion, ModelSpec, PartitionSpec};
pub use federation::{evaluate, run_training, ClientState, Evaluation, Federation, RoundSnapshot};
pub use fusion::{fuse, sample_clients, sample_with_faults, ClientMeta, PoolEntry};
pub use store::{write_atomic, CheckpointEntry, RoundLog, RunManifest, RunStore, MANIFEST_FILE};
