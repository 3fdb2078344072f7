use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::nn::ModelWeights;
use crate::{seed, Error, Result};

/// A client as seen by the sampler before a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolEntry {
    pub client_id: usize,
    pub n_k: usize,
    pub faulty: bool,
}

/// A round participant with its fusion weight `p_k = n_k / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientMeta {
    pub client_id: usize,
    pub n_k: usize,
    pub p_k: f64,
    pub faulty: bool,
}

impl ClientMeta {
    /// Participants sorted by id with data-size weights over the set.
    pub fn weigh(entries: &[PoolEntry]) -> Vec<ClientMeta> {
        let n: usize = entries.iter().map(|e| e.n_k).sum();
        let mut metas: Vec<ClientMeta> = entries
            .iter()
            .map(|e| ClientMeta {
                client_id: e.client_id,
                n_k: e.n_k,
                p_k: e.n_k as f64 / n as f64,
                faulty: e.faulty,
            })
            .collect();
        metas.sort_by_key(|m| m.client_id);
        metas
    }
}

fn eligible(pool: &[PoolEntry], batch_size: usize) -> impl Iterator<Item = &PoolEntry> {
    pool.iter().filter(move |e| e.n_k >= batch_size)
}

fn pick(from: &[usize], k: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    index::sample(rng, from.len(), k).into_iter().map(|i| from[i]).collect()
}

/// Uniform sample of `k` clients among those holding at least `batch_size`
/// rows, returned in ascending id order.
pub fn sample_clients(pool: &[PoolEntry], k: usize, batch_size: usize, round_seed: u64) -> Result<Vec<usize>> {
    let ids: Vec<usize> = eligible(pool, batch_size).map(|e| e.client_id).collect();
    if ids.len() < k {
        return Err(Error::config_field(
            "clients_per_round",
            format!("{k} clients requested but only {} hold at least batch_size={batch_size} rows", ids.len()),
        ));
    }
    let mut out = pick(&ids, k, &mut seed::rng(round_seed));
    out.sort_unstable();
    Ok(out)
}

/// Like [`sample_clients`] but draws up to `faulty_per_round` participants
/// from the eligible faulty clients and the rest from the clean ones.
pub fn sample_with_faults(
    pool: &[PoolEntry],
    k: usize,
    batch_size: usize,
    faulty_per_round: usize,
    round_seed: u64,
) -> Result<Vec<usize>> {
    let (faulty, clean): (Vec<&PoolEntry>, Vec<&PoolEntry>) = eligible(pool, batch_size).partition(|e| e.faulty);
    let faulty: Vec<usize> = faulty.into_iter().map(|e| e.client_id).collect();
    let clean: Vec<usize> = clean.into_iter().map(|e| e.client_id).collect();
    let nf = faulty_per_round.min(faulty.len()).min(k);
    if clean.len() < k - nf {
        return Err(Error::config_field(
            "clients_per_round",
            format!("{} clean clients needed but only {} are eligible", k - nf, clean.len()),
        ));
    }
    let mut rng = seed::rng(round_seed);
    let mut out = pick(&faulty, nf, &mut rng);
    out.extend(pick(&clean, k - nf, &mut rng));
    out.sort_unstable();
    Ok(out)
}

/// Data-size weighted average `Σ_k p_k W_k` over every weight and bias.
///
/// Terms are accumulated in ascending client id starting from the first
/// term, so a single client with `p = 1` is reproduced bit for bit.
pub fn fuse(client_weights: &[&ModelWeights], metas: &[ClientMeta]) -> Result<ModelWeights> {
    if client_weights.is_empty() || client_weights.len() != metas.len() {
        return Err(Error::Contract(format!(
            "{} weight sets for {} participants",
            client_weights.len(),
            metas.len()
        )));
    }
    let total: f64 = metas.iter().map(|m| m.p_k).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Contract(format!("fusion weights sum to {total}, not 1")));
    }
    if let Some(w) = client_weights.iter().find(|w| !w.same_shape(client_weights[0])) {
        return Err(Error::Shape(format!("client weights disagree: {} vs {} parameters", w.num_parameters(), client_weights[0].num_parameters())));
    }
    let mut order: Vec<usize> = (0..metas.len()).collect();
    order.sort_by_key(|&i| metas[i].client_id);

    let first = order[0];
    let mut out = client_weights[first].clone();
    for t in out.tensors_mut() {
        for v in t.data_mut() {
            *v *= metas[first].p_k;
        }
    }
    for &i in &order[1..] {
        let p = metas[i].p_k;
        for (acc, w) in out.tensors_mut().zip(client_weights[i].tensors()) {
            for (a, x) in acc.data_mut().iter_mut().zip(w.data()) {
                *a += p * x;
            }
        }
    }
    Ok(out)
}
