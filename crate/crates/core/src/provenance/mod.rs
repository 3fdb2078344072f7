//! Neuron-level provenance of a global-model prediction.
//!
//! For one input the engine
//! 1. selects the neurons of the global model whose post-activation exceeds a
//!    threshold `t` ([`activated_neurons`]);
//! 2. weights each by the gradient of the predicted logit with respect to its
//!    pre-activation ([`neuron_influence`]);
//! 3. splits every selected pre-activation into client shares. Fusion is a
//!    weighted average, so with the global layer input `z̄`,
//!    `w_g·z̄ + b_g = Σ_k p_k (w_k·z̄ + b_k)` holds exactly and client `k`'s
//!    share of neuron `n` is `c_n · p_k · (w_k·z̄ + b_k)`
//!    ([`client_neuron_contribution`]);
//! 4. sums the shares per client ([`client_total_contribution`]) and
//!    softmax-normalizes them into a ranked [`ProvenanceReport`].
//!
//! Contributions are signed; only the final softmax makes them positive.

mod engine;
mod heatmap;
mod report;

pub use engine::{
    activated_neurons, client_neuron_contribution, client_total_contribution, neuron_influence,
    normalize_contributions, rank_clients, trace, trace_input, ActivatedSet, InfluenceMap, TraceOptions,
};
pub use heatmap::{heatmap, HeatmapMatrix, HeatmapRow};
pub use report::{NeuronDetail, ProvenanceReport};
