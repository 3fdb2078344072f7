use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::flsim::write_atomic;
use crate::{Error, Result};

/// Per-neuron breakdown, present only when tracing with `detail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronDetail {
    pub layer: usize,
    pub index: usize,
    pub influence: f64,
    pub contributions: BTreeMap<usize, f64>,
}

/// Attribution of one prediction. Field order is the JSON field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceReport {
    pub input_id: usize,
    pub round: usize,
    pub true_label: Option<usize>,
    pub predicted_label: usize,
    /// Summed signed contribution per client.
    pub raw: BTreeMap<usize, f64>,
    /// Softmax of `raw`.
    pub normalized: BTreeMap<usize, f64>,
    pub ranking: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Vec<NeuronDetail>>,
}

impl ProvenanceReport {
    pub fn top(&self) -> Option<usize> {
        self.ranking.first().copied()
    }

    /// Label used for heatmap rows: the true label when known.
    pub fn row_label(&self) -> usize {
        self.true_label.unwrap_or(self.predicted_label)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}
