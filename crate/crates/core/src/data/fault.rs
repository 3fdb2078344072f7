use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{Dataset, Partition};
use crate::{seed, Error, Result};

/// Class-to-class relabeling. Serialized as a list of `[from, to]` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct LabelMapping(BTreeMap<usize, usize>);

impl From<Vec<(usize, usize)>> for LabelMapping {
    fn from(pairs: Vec<(usize, usize)>) -> Self {
        LabelMapping(pairs.into_iter().collect())
    }
}

impl From<LabelMapping> for Vec<(usize, usize)> {
    fn from(m: LabelMapping) -> Self {
        m.0.into_iter().collect()
    }
}

impl LabelMapping {
    pub fn apply(&self, label: usize) -> usize {
        self.0.get(&label).copied().unwrap_or(label)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Non-empty, but every entry maps a class to itself.
    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|(a, b)| a == b)
    }

    /// Source classes that actually change.
    pub fn flipped_sources(&self) -> Vec<usize> {
        self.0.iter().filter(|(a, b)| a != b).map(|(&a, _)| a).collect()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if let Some((a, b)) = self.0.iter().find(|(&a, &b)| a >= num_classes || b >= num_classes) {
            return Err(Error::config_field("fault.mapping", format!("{a} -> {b} is outside 0..{num_classes}")));
        }
        Ok(())
    }
}

fn default_faulty_per_round() -> usize {
    2
}

/// Label-flip fault injection for a cluster of clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub fraction_faulty: f64,
    pub mapping: LabelMapping,
    /// Seed for choosing the faulty cluster; derived from the master seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_faulty_per_round")]
    pub faulty_per_round: usize,
}

impl FaultSpec {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction_faulty) {
            return Err(Error::config_field("fault.fraction_faulty", "must lie in [0, 1]"));
        }
        self.mapping.validate(num_classes)?;
        if self.fraction_faulty > 0.0 && (self.mapping.is_empty() || self.mapping.is_identity()) {
            return Err(Error::config_field("fault.mapping", "must change at least one class"));
        }
        Ok(())
    }

    pub fn num_faulty(&self, num_clients: usize) -> usize {
        (self.fraction_faulty * num_clients as f64).round() as usize
    }

    /// The faulty cluster: a seeded uniform choice of client ids, ascending.
    pub fn faulty_clients(&self, num_clients: usize, master_seed: u64) -> Vec<usize> {
        let s = self.seed.unwrap_or_else(|| seed::derive(master_seed, &[seed::STREAM_FAULT]));
        let mut ids = index::sample(&mut seed::rng(s), num_clients, self.num_faulty(num_clients).min(num_clients)).into_vec();
        ids.sort_unstable();
        ids
    }
}

/// Replacement labels for one client's rows, aligned with `Partition::indices`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelOverlay {
    pub client_id: usize,
    pub labels: Vec<usize>,
}

/// Builds the flipped view of one client's labels. The dataset is untouched.
pub fn flip_labels(partition: &Partition, dataset: &Dataset, mapping: &LabelMapping) -> Result<LabelOverlay> {
    mapping.validate(dataset.num_classes())?;
    if !mapping.is_empty() && mapping.is_identity() {
        return Err(Error::config_field("fault.mapping", "identity mapping cannot flip any label"));
    }
    Ok(LabelOverlay {
        client_id: partition.client_id,
        labels: partition.indices.iter().map(|&i| mapping.apply(dataset.label(i))).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{label_group_partition, synth_blobs};

    #[test]
    fn flips_every_affected_row_and_leaves_others() {
        let d = synth_blobs(3, 4, 1, 0.1, 1).unwrap();
        let parts = label_group_partition(&d, &[vec![1], vec![0, 2]]).unwrap();
        let m = LabelMapping::from(vec![(1, 0)]);
        let o = flip_labels(&parts[0], &d, &m).unwrap();
        assert_eq!(o.labels, vec![0; 4]);
        assert_eq!(d.labels()[4..8], [1, 1, 1, 1]);
        let other = flip_labels(&parts[1], &d, &LabelMapping::default()).unwrap();
        assert_eq!(other.labels, parts[1].indices.iter().map(|&i| d.label(i)).collect::<Vec<_>>());
    }

    #[test]
    fn identity_and_out_of_range_mappings_rejected() {
        let d = synth_blobs(3, 2, 1, 0.1, 1).unwrap();
        let parts = label_group_partition(&d, &[vec![0]]).unwrap();
        assert!(flip_labels(&parts[0], &d, &LabelMapping::from(vec![(1, 1)])).is_err());
        assert!(flip_labels(&parts[0], &d, &LabelMapping::from(vec![(1, 7)])).is_err());
        let spec = FaultSpec { fraction_faulty: 0.2, mapping: LabelMapping::from(vec![(2, 2)]), seed: None, faulty_per_round: 2 };
        assert!(spec.validate(3).is_err());
    }

    #[test]
    fn faulty_cluster_size_and_determinism() {
        let spec = FaultSpec { fraction_faulty: 0.2, mapping: LabelMapping::from(vec![(0, 1)]), seed: None, faulty_per_round: 2 };
        let a = spec.faulty_clients(10, 5);
        assert_eq!(a.len(), 2);
        assert_eq!(a, spec.faulty_clients(10, 5));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn mapping_serializes_as_pairs() {
        let m = LabelMapping::from(vec![(3, 1), (1, 0)]);
        assert_eq!(serde_json::to_string(&m).unwrap(), "[[1,0],[3,1]]");
    }
}
