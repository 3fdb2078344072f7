//! Helpers shared by the integration tests: random federations and a
//! scalar-loop provenance oracle that shares no code with the engine.
#![allow(dead_code)]

use std::collections::BTreeMap;

use neurontrace::flsim::{fuse, ClientMeta, ClientState, PoolEntry, RoundSnapshot};
use neurontrace::nn::{ModelArch, ModelWeights};
use neurontrace::provenance::ProvenanceReport;
use neurontrace::seed;
use rand::Rng;

/// Fuses `clients` (ids 0..) with data sizes `sizes` into a snapshot.
pub fn snapshot(arch: &ModelArch, clients: Vec<ModelWeights>, sizes: &[usize]) -> RoundSnapshot {
    let entries: Vec<PoolEntry> =
        sizes.iter().enumerate().map(|(i, &n_k)| PoolEntry { client_id: i, n_k, faulty: false }).collect();
    let metas = ClientMeta::weigh(&entries);
    let refs: Vec<&ModelWeights> = clients.iter().collect();
    let global = fuse(&refs, &metas).unwrap();
    RoundSnapshot {
        round: 1,
        arch: arch.clone(),
        global,
        clients: metas.into_iter().zip(clients).map(|(meta, weights)| ClientState { meta, weights }).collect(),
    }
}

/// `k` independent uniform clients with random sizes in 1..100.
pub fn random_snapshot(arch: &ModelArch, k: usize, scale: f64, s: u64) -> RoundSnapshot {
    let mut rng = seed::rng(s);
    let clients: Vec<ModelWeights> = (0..k).map(|_| ModelWeights::uniform(arch, scale, &mut rng)).collect();
    let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(1..100)).collect();
    snapshot(arch, clients, &sizes)
}

pub fn random_input(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Dense-only network given as `(weight rows, bias)` per layer; ReLU after
/// every layer but the last.
struct Mlp {
    layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
}

impl Mlp {
    fn from_weights(w: &ModelWeights) -> Self {
        let layers = w
            .params
            .iter()
            .map(|p| {
                let (out, inp) = (p.weight.shape()[0], p.weight.shape()[1]);
                let rows = (0..out).map(|o| p.weight.data()[o * inp..(o + 1) * inp].to_vec()).collect();
                (rows, p.bias.data().to_vec())
            })
            .collect();
        Mlp { layers }
    }

    /// Per layer: (input, pre-activation, post-activation).
    fn forward(&self, x: &[f64]) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let mut out = Vec::new();
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (j, (rows, bias)) in self.layers.iter().enumerate() {
            let mut pre = Vec::new();
            for (row, b) in rows.iter().zip(bias) {
                let mut s = *b;
                for (w, z) in row.iter().zip(&cur) {
                    s += w * z;
                }
                pre.push(s);
            }
            let post: Vec<f64> = if j == last { pre.clone() } else { pre.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect() };
            out.push((cur, pre, post.clone()));
            cur = post;
        }
        out
    }
}

/// Report computed with explicit loops over neurons, weights and clients.
/// Works on dense ReLU networks only.
pub fn oracle_report(snap: &RoundSnapshot, input_id: usize, x: &[f64], threshold: f64) -> ProvenanceReport {
    let g = Mlp::from_weights(&snap.global);
    let fwd = g.forward(x);
    let logits = &fwd.last().unwrap().2;
    let mut pred = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[pred] {
            pred = i;
        }
    }
    // reverse pass: dpre[j][n] = ∂logit_pred / ∂pre_j[n]
    let nl = g.layers.len();
    let mut dpre: Vec<Vec<f64>> = vec![Vec::new(); nl];
    let mut dpost: Vec<f64> = (0..logits.len()).map(|i| if i == pred { 1.0 } else { 0.0 }).collect();
    for j in (0..nl).rev() {
        let (_, pre, _) = &fwd[j];
        let d: Vec<f64> = if j == nl - 1 {
            dpost.clone()
        } else {
            pre.iter().zip(&dpost).map(|(&p, &d)| if p > 0.0 { d } else { 0.0 }).collect()
        };
        let rows = &g.layers[j].0;
        let mut dinp = vec![0.0; fwd[j].0.len()];
        for (n, row) in rows.iter().enumerate() {
            for (i, w) in row.iter().enumerate() {
                dinp[i] += w * d[n];
            }
        }
        dpre[j] = d;
        dpost = dinp;
    }

    let clients: Vec<(usize, f64, Mlp)> =
        snap.clients.iter().map(|c| (c.meta.client_id, c.meta.p_k, Mlp::from_weights(&c.weights))).collect();
    let mut raw: BTreeMap<usize, f64> = clients.iter().map(|c| (c.0, 0.0)).collect();
    for j in 0..nl {
        let (zbar, _, post) = &fwd[j];
        for n in 0..post.len() {
            if post[n] <= threshold {
                continue;
            }
            for (id, p, m) in &clients {
                let (rows, bias) = &m.layers[j];
                let mut zout = bias[n];
                for i in 0..zbar.len() {
                    zout += rows[n][i] * zbar[i];
                }
                *raw.get_mut(id).unwrap() += dpre[j][n] * p * zout;
            }
        }
    }
    let max = raw.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = raw.values().map(|v| (v - max).exp()).sum();
    let normalized: BTreeMap<usize, f64> = raw.iter().map(|(&k, v)| (k, (v - max).exp() / denom)).collect();
    let mut ranking: Vec<usize> = raw.keys().copied().collect();
    ranking.sort_by(|a, b| {
        normalized[b].partial_cmp(&normalized[a]).unwrap().then(raw[b].partial_cmp(&raw[a]).unwrap()).then(a.cmp(b))
    });
    ProvenanceReport {
        input_id,
        round: snap.round,
        true_label: None,
        predicted_label: pred,
        raw,
        normalized,
        ranking,
        detail: None,
    }
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300) || a == b
}

/// Field-by-field comparison at relative tolerance `rel`.
pub fn reports_match(a: &ProvenanceReport, b: &ProvenanceReport, rel: f64) -> Result<(), String> {
    if (a.input_id, a.round, a.predicted_label) != (b.input_id, b.round, b.predicted_label) {
        return Err(format!("header differs: {a:?} vs {b:?}"));
    }
    if a.ranking != b.ranking {
        return Err(format!("ranking {:?} vs {:?}", a.ranking, b.ranking));
    }
    for (name, x, y) in [("raw", &a.raw, &b.raw), ("normalized", &a.normalized, &b.normalized)] {
        if x.keys().ne(y.keys()) {
            return Err(format!("{name} clients differ"));
        }
        for (k, v) in x {
            if !close(*v, y[k], rel) {
                return Err(format!("{name}[{k}]: {v} vs {}", y[k]));
            }
        }
    }
    Ok(())
}
