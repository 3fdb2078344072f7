use std::collections::BTreeMap;

use super::ProvenanceReport;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapRow {
    pub label: usize,
    /// Number of reports averaged into this row.
    pub inputs: usize,
    /// Mean normalized share per client, aligned with [`HeatmapMatrix::clients`].
    pub cells: Vec<f64>,
}

/// Mean normalized contribution per (input label, client).
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapMatrix {
    pub clients: Vec<usize>,
    /// Ascending label; labels without inputs are omitted.
    pub rows: Vec<HeatmapRow>,
}

/// Averages the reports of one round into a label × client matrix.
pub fn heatmap(reports: &[ProvenanceReport], participants: &[usize]) -> Result<HeatmapMatrix> {
    let Some(first) = reports.first() else {
        return Err(Error::Degenerate("no reports to aggregate".into()));
    };
    if let Some(r) = reports.iter().find(|r| r.round != first.round) {
        return Err(Error::config(format!(
            "reports mix rounds {} and {}",
            first.round, r.round
        )));
    }
    let mut clients = participants.to_vec();
    clients.sort_unstable();
    clients.dedup();
    let mut ordered: Vec<&ProvenanceReport> = reports.iter().collect();
    ordered.sort_by_key(|r| r.input_id);

    let mut sums: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
    for r in ordered {
        let (n, cells) = sums.entry(r.row_label()).or_insert_with(|| (0, vec![0.0; clients.len()]));
        *n += 1;
        for (cell, c) in cells.iter_mut().zip(&clients) {
            *cell += r.normalized.get(c).copied().unwrap_or(0.0);
        }
    }
    Ok(HeatmapMatrix {
        clients,
        rows: sums
            .into_iter()
            .map(|(label, (n, cells))| HeatmapRow {
                label,
                inputs: n,
                cells: cells.into_iter().map(|s| s / n as f64).collect(),
            })
            .collect(),
    })
}

impl HeatmapMatrix {
    pub fn row(&self, label: usize) -> Option<&HeatmapRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn cell(&self, label: usize, client: usize) -> Option<f64> {
        let col = self.clients.iter().position(|&c| c == client)?;
        self.row(label).map(|r| r.cells[col])
    }

    /// Unweighted mean over matrices (e.g. several rounds) sharing one client
    /// set; a row averages only the matrices that contain its label.
    pub fn mean(matrices: &[HeatmapMatrix]) -> Result<HeatmapMatrix> {
        let Some(first) = matrices.first() else {
            return Err(Error::Degenerate("no heatmaps to average".into()));
        };
        if matrices.iter().any(|m| m.clients != first.clients) {
            return Err(Error::config("heatmaps cover different clients"));
        }
        let mut acc: BTreeMap<usize, (usize, usize, Vec<f64>)> = BTreeMap::new();
        for m in matrices {
            for r in &m.rows {
                let (k, inputs, cells) = acc.entry(r.label).or_insert_with(|| (0, 0, vec![0.0; first.clients.len()]));
                *k += 1;
                *inputs += r.inputs;
                for (a, v) in cells.iter_mut().zip(&r.cells) {
                    *a += v;
                }
            }
        }
        Ok(HeatmapMatrix {
            clients: first.clients.clone(),
            rows: acc
                .into_iter()
                .map(|(label, (k, inputs, cells))| HeatmapRow {
                    label,
                    inputs,
                    cells: cells.into_iter().map(|s| s / k as f64).collect(),
                })
                .collect(),
        })
    }

    /// CSV with header `label,client_<id>,...`, one row per label.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label");
        for c in &self.clients {
            s.push_str(&format!(",client_{c}"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.label.to_string());
            for v in &r.cells {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}
