use rand::seq::SliceRandom;

use super::{LayerParams, ModelArch, ModelWeights};
use crate::{seed, Error, Result};

/// Labeled training rows as seen by one client.
pub trait LabeledSource: Sync {
    fn len(&self) -> usize;
    fn features(&self, row: usize) -> &[f64];
    fn label(&self, row: usize) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// FedProx proximal term `(mu / 2) · ‖w − reference‖²`.
#[derive(Debug, Clone, Copy)]
pub struct Proximal<'a> {
    pub mu: f64,
    pub reference: &'a ModelWeights,
}

fn softmax_xent_grad(logits: &[f64], label: usize) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter()
        .enumerate()
        .map(|(i, e)| e / sum - if i == label { 1.0 } else { 0.0 })
        .collect()
}

/// Mini-batch SGD on mean cross-entropy.
///
/// Rows are shuffled once per epoch from `hyper.seed`; the last batch may be
/// short. Sample gradients are accumulated in batch order, so the result is
/// bitwise reproducible.
pub fn train_local(
    arch: &ModelArch,
    weights: &ModelWeights,
    data: &dyn LabeledSource,
    hyper: TrainHyper,
    prox: Option<Proximal<'_>>,
) -> Result<ModelWeights> {
    if data.is_empty() {
        return Err(Error::config("local training data is empty"));
    }
    if hyper.epochs == 0 || hyper.batch_size == 0 {
        return Err(Error::config("epochs and batch_size must be positive"));
    }
    if !hyper.lr.is_finite() || hyper.lr < 0.0 {
        return Err(Error::config_field("lr", "must be finite and non-negative"));
    }
    weights.check(arch)?;
    if let Some(p) = prox {
        p.reference.check(arch)?;
    }

    let mut w = weights.clone();
    let mut grads = ModelWeights::zeros(arch);
    let mut rng = seed::rng(hyper.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            for t in grads.tensors_mut() {
                t.data_mut().fill(0.0);
            }
            for &row in batch {
                let label = data.label(row);
                if label >= arch.num_classes() {
                    return Err(Error::Contract(format!(
                        "label {label} out of range for {} classes",
                        arch.num_classes()
                    )));
                }
                let values = arch.run(&w, data.features(row), None)?;
                let g = softmax_xent_grad(values.last().expect("logits").data(), label);
                arch.backprop(&w, &values, g, Some(&mut grads.params), None);
            }
            apply_step(&mut w, &grads.params, hyper.lr, batch.len() as f64, prox);
        }
    }
    if w.tensors().any(|t| !t.is_finite()) {
        return Err(Error::Numeric("local training diverged".into()));
    }
    Ok(w)
}

fn apply_step(w: &mut ModelWeights, grads: &[LayerParams], lr: f64, batch: f64, prox: Option<Proximal<'_>>) {
    let grads = grads.iter().flat_map(|p| [&p.weight, &p.bias]);
    match prox {
        None => {
            for (t, g) in w.tensors_mut().zip(grads) {
                for (v, gi) in t.data_mut().iter_mut().zip(g.data()) {
                    *v -= lr * (gi / batch);
                }
            }
        }
        Some(Proximal { mu, reference }) => {
            for ((t, g), r) in w.tensors_mut().zip(grads).zip(reference.tensors()) {
                for ((v, gi), ri) in t.data_mut().iter_mut().zip(g.data()).zip(r.data()) {
                    *v -= lr * (gi / batch + mu * (*v - ri));
                }
            }
        }
    }
}
