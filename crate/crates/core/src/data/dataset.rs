use rand_distr::{Distribution, Normal};

use crate::nn::{LabeledSource, Tensor};
use crate::{seed, Error, Result};

/// Immutable labeled dataset. Rows are stored flat; every row has
/// `sample_shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sample_shape: Vec<usize>,
    features: Vec<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(sample_shape: Vec<usize>, features: Vec<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let row: usize = sample_shape.iter().product();
        if row == 0 || sample_shape.is_empty() {
            return Err(Error::Shape(format!("invalid sample shape {sample_shape:?}")));
        }
        if features.len() != row * labels.len() {
            return Err(Error::Shape(format!(
                "{} feature values for {} rows of {row}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::config(format!("label {bad} out of range for {num_classes} classes")));
        }
        Ok(Dataset {
            sample_shape,
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, row: usize) -> usize {
        self.labels[row]
    }

    pub fn features(&self, row: usize) -> &[f64] {
        let n: usize = self.sample_shape.iter().product();
        &self.features[row * n..(row + 1) * n]
    }

    pub fn sample(&self, row: usize) -> Tensor {
        Tensor::new(self.sample_shape.clone(), self.features(row).to_vec()).expect("row matches sample shape")
    }

    /// Rows of each class in ascending row order.
    pub fn rows_by_class(&self) -> Vec<Vec<usize>> {
        let mut by = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by[l].push(i);
        }
        by
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let features = rows.iter().flat_map(|&r| self.features(r).iter().copied()).collect();
        Dataset {
            sample_shape: self.sample_shape.clone(),
            features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Same rows with a wider label space (e.g. a test split missing a class).
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if self.labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::config(format!("dataset has labels outside 0..{num_classes}")));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    /// Training view of `rows`, optionally with overlay labels aligned to `rows`.
    pub fn view<'a>(&'a self, rows: &'a [usize], labels: Option<&'a [usize]>) -> ClientView<'a> {
        debug_assert!(labels.is_none_or(|l| l.len() == rows.len()));
        ClientView {
            dataset: self,
            rows,
            labels,
        }
    }
}

/// One client's rows of a shared dataset, with an optional label overlay.
#[derive(Debug, Clone, Copy)]
pub struct ClientView<'a> {
    dataset: &'a Dataset,
    rows: &'a [usize],
    labels: Option<&'a [usize]>,
}

impl LabeledSource for ClientView<'_> {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn features(&self, row: usize) -> &[f64] {
        self.dataset.features(self.rows[row])
    }

    fn label(&self, row: usize) -> usize {
        match self.labels {
            Some(l) => l[row],
            None => self.dataset.label(self.rows[row]),
        }
    }
}

/// Gaussian clusters, one per class, with centers drawn uniformly in
/// `[0.2, 0.8]^dim`. Values are clamped to `[0, 1]`. Rows are class-major.
pub fn synth_blobs(num_classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if num_classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::config("synth_blobs needs positive class count, rows per class and dimension"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::config_field("spread", "must be finite and non-negative"));
    }
    use rand::Rng;
    let mut rng = seed::rng(seed);
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Vec::with_capacity(num_classes * per_class * dim);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for &c in center {
                let v = c + spread * noise.sample(&mut rng);
                features.push(v.clamp(0.0, 1.0));
            }
            labels.push(class);
        }
    }
    Dataset::new(vec![dim], features, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_counts_and_determinism() {
        let d = synth_blobs(3, 10, 4, 0.1, 7).unwrap();
        assert_eq!(d.len(), 30);
        assert_eq!(d, synth_blobs(3, 10, 4, 0.1, 7).unwrap());
        assert_ne!(d, synth_blobs(3, 10, 4, 0.1, 8).unwrap());
        assert!((0..d.len()).flat_map(|r| d.features(r).to_vec()).all(|v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn zero_spread_collapses_each_class() {
        let d = synth_blobs(2, 5, 3, 0.0, 1).unwrap();
        for r in 1..5 {
            assert_eq!(d.features(r), d.features(0));
        }
        assert_ne!(d.features(5), d.features(0));
    }

    #[test]
    fn view_applies_overlay_only_to_itself() {
        let d = synth_blobs(2, 2, 1, 0.0, 1).unwrap();
        let rows = [2, 3];
        let overlay = [0, 0];
        let flipped = d.view(&rows, Some(&overlay));
        let plain = d.view(&rows, None);
        assert_eq!(flipped.label(0), 0);
        assert_eq!(plain.label(0), 1);
        assert_eq!(d.label(2), 1);
    }

    #[test]
    fn rejects_out_of_range_labels() {
        assert!(Dataset::new(vec![1], vec![0.0], vec![3], 2).is_err());
        assert!(Dataset::new(vec![2], vec![0.0], vec![0], 2).is_err());
    }
}
