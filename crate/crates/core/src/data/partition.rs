use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};

use super::Dataset;
use crate::{seed, Error, Result};

/// One client's share of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub client_id: usize,
    /// Ascending dataset row indices.
    pub indices: Vec<usize>,
    /// Count of rows per class.
    pub label_histogram: Vec<usize>,
}

impl Partition {
    fn new(client_id: usize, mut indices: Vec<usize>, dataset: &Dataset) -> Self {
        indices.sort_unstable();
        let mut label_histogram = vec![0; dataset.num_classes()];
        for &i in &indices {
            label_histogram[dataset.label(i)] += 1;
        }
        Partition {
            client_id,
            indices,
            label_histogram,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn holds_label(&self, label: usize) -> bool {
        self.label_histogram.get(label).is_some_and(|&c| c > 0)
    }
}

/// Splits `total` into integer counts proportional to `shares` (largest
/// remainder; ties to the lower index).
pub(crate) fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per class, one Dirichlet draw over `clients` decides how that class's rows
/// (in a seeded shuffle) are dealt out.
fn deal_dirichlet(
    dataset: &Dataset,
    classes: &[usize],
    clients: &[usize],
    alpha: f64,
    rng: &mut impl rand::Rng,
) -> Result<Vec<Partition>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::config_field("alpha", e.to_string()))?;
    let by_class = dataset.rows_by_class();
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); clients.len()];
    for &class in classes {
        let mut rows = by_class[class].clone();
        rows.shuffle(rng);
        let mut shares: Vec<f64> = clients.iter().map(|_| gamma.sample(rng)).collect();
        if !(shares.iter().sum::<f64>() > 0.0) {
            shares.fill(1.0);
        }
        let counts = largest_remainder(&shares, rows.len());
        let mut start = 0;
        for (slot, n) in counts.into_iter().enumerate() {
            owned[slot].extend_from_slice(&rows[start..start + n]);
            start += n;
        }
    }
    Ok(clients
        .iter()
        .zip(owned)
        .map(|(&id, rows)| Partition::new(id, rows, dataset))
        .collect())
}

/// Non-IID split: for every class, Dirichlet(`alpha`) proportions over all
/// clients. Partitions are disjoint and cover the dataset; clients may end up
/// empty.
pub fn dirichlet_partition(dataset: &Dataset, num_clients: usize, alpha: f64, seed: u64) -> Result<Vec<Partition>> {
    if num_clients == 0 {
        return Err(Error::config_field("num_clients", "must be at least 1"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config_field("alpha", "must be positive and finite"));
    }
    let classes: Vec<usize> = (0..dataset.num_classes()).collect();
    let clients: Vec<usize> = (0..num_clients).collect();
    deal_dirichlet(dataset, &classes, &clients, alpha, &mut seed::rng(seed))
}

fn check_disjoint(groups: &[Vec<usize>], num_classes: usize, field: &str) -> Result<()> {
    let mut seen = vec![false; num_classes];
    for g in groups {
        for &l in g {
            if l >= num_classes {
                return Err(Error::config_field(field, format!("label {l} out of range")));
            }
            if std::mem::replace(&mut seen[l], true) {
                return Err(Error::config_field(field, format!("label {l} assigned more than once")));
            }
        }
    }
    Ok(())
}

/// Client `i` receives every row whose label is in `groups[i]`. Groups must
/// not overlap.
pub fn label_group_partition(dataset: &Dataset, groups: &[Vec<usize>]) -> Result<Vec<Partition>> {
    check_disjoint(groups, dataset.num_classes(), "partition.groups")?;
    let by_class = dataset.rows_by_class();
    Ok(groups
        .iter()
        .enumerate()
        .map(|(id, g)| Partition::new(id, g.iter().flat_map(|&l| by_class[l].iter().copied()).collect(), dataset))
        .collect())
}

/// Labels are split into disjoint clusters that together cover every label.
/// Cluster `c` owns clients `c·m .. (c+1)·m` (with `m = clients_per_cluster`),
/// which split that cluster's rows by a per-class Dirichlet(`alpha`) draw.
pub fn cluster_partition(
    dataset: &Dataset,
    clusters: &[Vec<usize>],
    clients_per_cluster: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Partition>> {
    check_disjoint(clusters, dataset.num_classes(), "partition.clusters")?;
    let covered: usize = clusters.iter().map(Vec::len).sum();
    if covered != dataset.num_classes() {
        return Err(Error::config_field("partition.clusters", "clusters must cover every label exactly once"));
    }
    if clients_per_cluster == 0 {
        return Err(Error::config_field("num_clients", "each cluster needs at least one client"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config_field("alpha", "must be positive and finite"));
    }
    let mut rng = seed::rng(seed);
    let mut out = Vec::new();
    for (c, labels) in clusters.iter().enumerate() {
        let clients: Vec<usize> = (c * clients_per_cluster..(c + 1) * clients_per_cluster).collect();
        out.extend(deal_dirichlet(dataset, labels, &clients, alpha, &mut rng)?);
    }
    Ok(out)
}
