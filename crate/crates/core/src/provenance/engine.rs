use std::collections::BTreeMap;
use std::path::Path;

use super::{NeuronDetail, ProvenanceReport};
use crate::flsim::{RoundSnapshot, RunStore};
use crate::nn::{apply_param_layer, ActivationTrace, Layer, ModelArch, ModelWeights, NeuronId};
use crate::{Error, Result};

/// Neurons whose post-activation is strictly greater than `threshold`,
/// ordered by `(layer, index)`. Output-layer neurons qualify when their logit
/// exceeds the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivatedSet {
    pub threshold: f64,
    pub neurons: Vec<NeuronId>,
}

impl ActivatedSet {
    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn contains(&self, id: NeuronId) -> bool {
        self.neurons.binary_search(&id).is_ok()
    }
}

pub fn activated_neurons(trace: &ActivationTrace, threshold: f64) -> ActivatedSet {
    let mut neurons = Vec::new();
    for layer in 0..trace.num_param_layers() {
        for (index, &z) in trace.post_activation(layer).data().iter().enumerate() {
            if z > threshold {
                neurons.push(NeuronId { layer, index });
            }
        }
    }
    ActivatedSet { threshold, neurons }
}

/// Gradient of the selected logit with respect to each activated neuron.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InfluenceMap(BTreeMap<NeuronId, f64>);

impl InfluenceMap {
    pub fn get(&self, id: NeuronId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NeuronId, f64)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }
}

impl FromIterator<(NeuronId, f64)> for InfluenceMap {
    fn from_iter<I: IntoIterator<Item = (NeuronId, f64)>>(iter: I) -> Self {
        InfluenceMap(iter.into_iter().collect())
    }
}

/// Influence `c_n = ∂y/∂pre(n)` of every activated neuron on the logit `y` of
/// `predicted_class`, which must be the trace's argmax.
pub fn neuron_influence(
    arch: &ModelArch,
    global: &ModelWeights,
    trace: &ActivationTrace,
    predicted_class: usize,
    activated: &ActivatedSet,
) -> Result<InfluenceMap> {
    if predicted_class != trace.predicted_class() {
        return Err(Error::Contract(format!(
            "class {predicted_class} is not the prediction ({}) of this trace",
            trace.predicted_class()
        )));
    }
    let grads = arch.backward_influence(global, trace, predicted_class)?;
    Ok(activated.neurons.iter().map(|&id| (id, grads.get(id))).collect())
}

/// `(weights, bias)` of one neuron and the slice of the layer input it reads,
/// written out scalar by scalar.
fn neuron_terms<'a>(
    arch: &ModelArch,
    neuron: NeuronId,
    layer_input: &'a [f64],
    client: &'a ModelWeights,
) -> (Vec<(f64, f64)>, f64) {
    let pl = &arch.param_layers()[neuron.layer];
    let params = &client.params[neuron.layer];
    let w = params.weight.data();
    match arch.layers()[pl.op_index] {
        Layer::Dense { inputs, .. } => {
            let row = &w[neuron.index * inputs..(neuron.index + 1) * inputs];
            (row.iter().copied().zip(layer_input.iter().copied()).collect(), params.bias.data()[neuron.index])
        }
        Layer::Conv2d { in_channels, kernel, stride, .. } => {
            let (h, wd) = (pl.input_shape[1], pl.input_shape[2]);
            let (oh, ow) = (pl.output_shape[1], pl.output_shape[2]);
            let o = neuron.index / (oh * ow);
            let (oy, ox) = ((neuron.index / ow) % oh, neuron.index % ow);
            let mut terms = Vec::with_capacity(in_channels * kernel * kernel);
            for c in 0..in_channels {
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let wi = w[((o * in_channels + c) * kernel + ky) * kernel + kx];
                        let zi = layer_input[(c * h + oy * stride + ky) * wd + ox * stride + kx];
                        terms.push((wi, zi));
                    }
                }
            }
            (terms, params.bias.data()[o])
        }
        _ => unreachable!("neurons live on parametric layers"),
    }
}

/// Share of `client` in one activated neuron: `c_n · p_k · (w_k·z̄ + b_k)`,
/// with `z̄` taken from the global model's trace.
pub fn client_neuron_contribution(
    arch: &ModelArch,
    neuron: NeuronId,
    global_trace: &ActivationTrace,
    client_weights: &ModelWeights,
    p_k: f64,
    influence: &InfluenceMap,
) -> Result<f64> {
    let c = influence
        .get(neuron)
        .ok_or_else(|| Error::Contract(format!("neuron {neuron:?} is not in the activated set")))?;
    arch.check_neuron(neuron)?;
    client_weights.check(arch)?;
    let (terms, bias) = neuron_terms(arch, neuron, global_trace.layer_input(neuron.layer).data(), client_weights);
    let z_out = terms.iter().fold(bias, |acc, (w, z)| acc + w * z);
    Ok(c * p_k * z_out)
}

/// `Cont_k`: the client's shares summed over every activated neuron, in
/// `(layer, index)` order.
pub fn client_total_contribution(
    arch: &ModelArch,
    activated: &ActivatedSet,
    global_trace: &ActivationTrace,
    client_weights: &ModelWeights,
    p_k: f64,
    influence: &InfluenceMap,
) -> Result<f64> {
    activated.neurons.iter().try_fold(0.0, |acc, &n| {
        Ok(acc + client_neuron_contribution(arch, n, global_trace, client_weights, p_k, influence)?)
    })
}

/// Softmax over clients with max-subtraction.
pub fn normalize_contributions(raw: &BTreeMap<usize, f64>) -> BTreeMap<usize, f64> {
    let max = raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: BTreeMap<usize, f64> = raw.iter().map(|(&k, &v)| (k, (v - max).exp())).collect();
    let sum: f64 = exps.values().sum();
    exps.into_iter().map(|(k, e)| (k, e / sum)).collect()
}

/// Client ids by descending normalized share, then descending raw total,
/// then ascending id.
pub fn rank_clients(raw: &BTreeMap<usize, f64>, normalized: &BTreeMap<usize, f64>) -> Vec<usize> {
    let mut ids: Vec<usize> = normalized.keys().copied().collect();
    ids.sort_by(|a, b| {
        normalized[b]
            .total_cmp(&normalized[a])
            .then(raw[b].total_cmp(&raw[a]))
            .then(a.cmp(b))
    });
    ids
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Activation threshold `t`.
    pub threshold: f64,
    /// Keep only the first `top_k` clients of the ranking.
    pub top_k: Option<usize>,
    /// Record per-neuron, per-client shares.
    pub detail: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { threshold: 0.0, top_k: None, detail: false }
    }
}

/// Attributes the global model's prediction on `input` to the round's clients.
///
/// Client shares are computed per layer by applying each client's parameters
/// to the global layer input, which gives `w_k·z̄ + b_k` for every neuron of
/// the layer at once.
pub fn trace(
    snapshot: &RoundSnapshot,
    input_id: usize,
    input: &[f64],
    true_label: Option<usize>,
    opts: &TraceOptions,
) -> Result<ProvenanceReport> {
    let arch = &snapshot.arch;
    if snapshot.clients.is_empty() {
        return Err(Error::Contract(format!("round {} has no participants", snapshot.round)));
    }
    let global_trace = arch.trace(&snapshot.global, input)?;
    let predicted = global_trace.predicted_class();
    let activated = activated_neurons(&global_trace, opts.threshold);
    if activated.is_empty() {
        return Err(Error::Degenerate(format!(
            "input {input_id}: no neuron exceeds threshold {}",
            opts.threshold
        )));
    }
    let influence = neuron_influence(arch, &snapshot.global, &global_trace, predicted, &activated)?;

    // activated neurons grouped by layer, with their influence
    let mut by_layer: Vec<Vec<(usize, f64)>> = vec![Vec::new(); arch.param_layers().len()];
    for (id, c) in influence.iter() {
        by_layer[id.layer].push((id.index, c));
    }

    let mut raw = BTreeMap::new();
    let mut detail: BTreeMap<NeuronId, BTreeMap<usize, f64>> = BTreeMap::new();
    for client in &snapshot.clients {
        let p_k = client.meta.p_k;
        let mut total = 0.0;
        for (layer, members) in by_layer.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let pl = &arch.param_layers()[layer];
            let response = apply_param_layer(
                arch,
                pl.op_index,
                &client.weights.params[layer],
                global_trace.layer_input(layer).data(),
            );
            for &(index, c) in members {
                let cont = c * p_k * response[index];
                total += cont;
                if opts.detail {
                    detail.entry(NeuronId { layer, index }).or_default().insert(client.meta.client_id, cont);
                }
            }
        }
        raw.insert(client.meta.client_id, total);
    }
    let normalized = normalize_contributions(&raw);
    let mut ranking = rank_clients(&raw, &normalized);
    if let Some(k) = opts.top_k {
        ranking.truncate(k);
    }
    Ok(ProvenanceReport {
        input_id,
        round: snapshot.round,
        true_label,
        predicted_label: predicted,
        raw,
        normalized,
        ranking,
        detail: opts.detail.then(|| {
            detail
                .into_iter()
                .map(|(id, contributions)| NeuronDetail {
                    layer: id.layer,
                    index: id.index,
                    influence: influence.get(id).expect("detail only for activated neurons"),
                    contributions,
                })
                .collect()
        }),
    })
}

/// [`trace`] against the checkpoints of `round` in a run directory.
pub fn trace_input(
    run_dir: &Path,
    round: usize,
    input_id: usize,
    input: &[f64],
    true_label: Option<usize>,
    opts: &TraceOptions,
) -> Result<ProvenanceReport> {
    let store = RunStore::open(run_dir)?;
    let snapshot = RoundSnapshot::load(&store, round)?;
    trace(&snapshot, input_id, input, true_label, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flsim::{ClientMeta, ClientState};
    use crate::nn::{LayerParams, Tensor};

    fn dense_weights(w: Vec<f64>, b: f64) -> ModelWeights {
        ModelWeights {
            params: vec![LayerParams {
                weight: Tensor::new(vec![1, w.len()], w).unwrap(),
                bias: Tensor::from_vec(vec![b]),
            }],
        }
    }

    #[test]
    fn activated_set_is_strict() {
        let arch = ModelArch::new(vec![3], vec![Layer::Dense { inputs: 3, outputs: 3 }, Layer::Relu, Layer::Dense { inputs: 3, outputs: 1 }], 1).unwrap();
        let mut w = ModelWeights::zeros(&arch);
        // identity first layer so post = relu(input)
        for i in 0..3 {
            w.params[0].weight.data_mut()[i * 3 + i] = 1.0;
        }
        w.params[1].bias.data_mut()[0] = -1.0;
        let t = arch.trace(&w, &[0.5, -0.2, 0.0]).unwrap();
        let a = activated_neurons(&t, 0.0);
        assert_eq!(a.neurons, vec![NeuronId::new(0, 0)]);
        assert!(activated_neurons(&t, 0.5).is_empty());
    }

    #[test]
    fn two_client_hand_example() {
        // w1=[1,2], w2=[3,4], b=0, z̄=[1,1], p=(0.5,0.5), c=1
        let arch = ModelArch::new(vec![2], vec![Layer::Dense { inputs: 2, outputs: 1 }], 1).unwrap();
        let c1 = dense_weights(vec![1.0, 2.0], 0.0);
        let c2 = dense_weights(vec![3.0, 4.0], 0.0);
        let global = dense_weights(vec![2.0, 3.0], 0.0);
        let t = arch.trace(&global, &[1.0, 1.0]).unwrap();
        let a = activated_neurons(&t, 0.0);
        let inf = neuron_influence(&arch, &global, &t, 0, &a).unwrap();
        let n = NeuronId::new(0, 0);
        assert_eq!(inf.get(n), Some(1.0));
        let k1 = client_neuron_contribution(&arch, n, &t, &c1, 0.5, &inf).unwrap();
        let k2 = client_neuron_contribution(&arch, n, &t, &c2, 0.5, &inf).unwrap();
        assert_eq!((k1, k2), (1.5, 3.5));
        assert_eq!(k1 + k2, t.pre_activation(0).data()[0]);
        assert_eq!(client_total_contribution(&arch, &a, &t, &c1, 0.5, &inf).unwrap(), 1.5);
    }

    #[test]
    fn zero_weights_or_zero_gradient_give_zero() {
        let arch = ModelArch::new(vec![2], vec![Layer::Dense { inputs: 2, outputs: 1 }], 1).unwrap();
        let global = dense_weights(vec![2.0, 3.0], 0.0);
        let t = arch.trace(&global, &[1.0, 1.0]).unwrap();
        let n = NeuronId::new(0, 0);
        let inf: InfluenceMap = [(n, 1.0)].into_iter().collect();
        assert_eq!(client_neuron_contribution(&arch, n, &t, &dense_weights(vec![0.0, 0.0], 0.0), 0.5, &inf).unwrap(), 0.0);
        let gate: InfluenceMap = [(n, 0.0)].into_iter().collect();
        assert_eq!(client_neuron_contribution(&arch, n, &t, &dense_weights(vec![9.0, -4.0], 2.0), 0.5, &gate).unwrap(), 0.0);
        let empty = InfluenceMap::default();
        assert!(client_neuron_contribution(&arch, n, &t, &global, 0.5, &empty).is_err());
    }

    #[test]
    fn softmax_cases() {
        let m = |v: &[f64]| v.iter().copied().enumerate().collect::<BTreeMap<_, _>>();
        assert_eq!(normalize_contributions(&m(&[0.0, 0.0])), m(&[0.5, 0.5]));
        assert_eq!(normalize_contributions(&m(&[-3.7])), m(&[1.0]));
        let n = normalize_contributions(&m(&[3f64.ln(), 1f64.ln()]));
        assert!((n[&0] - 0.75).abs() < 1e-15 && (n[&1] - 0.25).abs() < 1e-15);
        // large magnitudes stay finite
        let n = normalize_contributions(&m(&[1e6, 1e6 - 1.0]));
        assert!(n.values().all(|v| v.is_finite()));
    }

    #[test]
    fn ranking_breaks_ties_by_id() {
        let raw: BTreeMap<usize, f64> = [(4, 1.0), (2, 1.0), (7, 3.0)].into_iter().collect();
        let norm = normalize_contributions(&raw);
        assert_eq!(rank_clients(&raw, &norm), vec![7, 2, 4]);
    }

    #[test]
    fn predicted_class_precondition() {
        let arch = ModelArch::mlp(vec![2], &[], 2).unwrap();
        let mut w = ModelWeights::zeros(&arch);
        w.params[0].bias.data_mut()[1] = 1.0;
        let t = arch.trace(&w, &[0.0, 0.0]).unwrap();
        let a = activated_neurons(&t, 0.0);
        assert!(neuron_influence(&arch, &w, &t, 0, &a).is_err());
        assert!(neuron_influence(&arch, &w, &t, 1, &a).is_ok());
    }

    #[test]
    fn degenerate_threshold_is_reported() {
        let arch = ModelArch::mlp(vec![2], &[3], 2).unwrap();
        let w = ModelWeights::uniform(&arch, 0.5, &mut crate::seed::rng(1));
        let snap = RoundSnapshot {
            round: 1,
            arch: arch.clone(),
            global: w.clone(),
            clients: vec![ClientState { meta: ClientMeta { client_id: 0, n_k: 5, p_k: 1.0, faulty: false }, weights: w }],
        };
        let opts = TraceOptions { threshold: 1e9, ..Default::default() };
        assert!(matches!(trace(&snap, 0, &[0.3, 0.4], None, &opts), Err(Error::Degenerate(_))));
    }
}
