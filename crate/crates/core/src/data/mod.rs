//! Datasets, non-IID partitioning and label-flip fault injection.

mod dataset;
mod fault;
mod idx;
mod partition;

pub use dataset::{synth_blobs, ClientView, Dataset};
pub use fault::{flip_labels, FaultSpec, LabelMapping, LabelOverlay};
pub use idx::load_idx;
pub use partition::{cluster_partition, dirichlet_partition, label_group_partition, Partition};
