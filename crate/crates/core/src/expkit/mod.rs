//! Evaluation protocols built on [`crate::flsim`] and [`crate::provenance`]:
//! the provenance-accuracy metric and three desk-scale experiments
//! (fault localization, catastrophic forgetting, cross-silo tracking).

mod cross_silo;
mod fault;
mod forgetting;
mod metric;
mod tracing;

pub use cross_silo::{cross_silo_run, CrossSiloRun};
pub use fault::{fault_localization_run, FaultLocalizationRun, FaultRound};
pub use forgetting::{forgetting_run, ForgettingRound, ForgettingRun};
pub use metric::{mean_accuracy, provenance_accuracy, AccuracyResult, GroundTruth};
pub use tracing::{holders_truth, select_inputs, trace_round, Selection, TracedRound};

use std::path::Path;

use crate::flsim::write_atomic;
use crate::Result;

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("results serialize");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// `round,value` CSV; empty cells for rounds without a value.
fn write_curve(path: &Path, header: &str, points: impl IntoIterator<Item = (usize, Option<f64>)>) -> Result<()> {
    let mut s = format!("round,{header}\n");
    for (round, v) in points {
        match v {
            Some(v) => s.push_str(&format!("{round},{v}\n")),
            None => s.push_str(&format!("{round},\n")),
        }
    }
    write_atomic(path, s.as_bytes())
}
