//! Evaluation of learned representations.

pub mod accuracy;
pub mod cluster;
pub mod few_shot;
pub mod linear;
pub mod stability;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use accuracy::{clustering_accuracy, min_cost_assignment};
pub use cluster::{hierarchical_cluster, Linkage};
pub use few_shot::{few_shot_eval, FewShotConfig, FewShotResult};
pub use linear::{linear_eval, stratified_split, stratified_subset, LinearEvalConfig, LinearEvalResult, Split};
pub use stability::{stability, Deltas, StabilityReport};

/// `k` values of the default neighborhood sweep.
pub const STABILITY_KS: [usize; 6] = [1, 5, 10, 20, 50, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub k: usize,
    pub acc: f64,
}

/// Clusters `h` into `k` groups and scores them against `labels`.
pub fn zero_shot(h: ndarray::ArrayView2<f64>, labels: &[usize], k: usize, linkage: Linkage) -> crate::Result<ClusteringResult> {
    let assignments = hierarchical_cluster(h, k, linkage)?;
    let acc = clustering_accuracy(&assignments, labels)?;
    Ok(ClusteringResult { assignments, k, acc })
}

/// Metrics JSON written by the evaluation harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: String,
    pub seed: u64,
    pub acc: Option<f64>,
    pub linear_acc: Option<f64>,
    /// Keyed by subset fraction, e.g. `"0.1"`, and `"<fraction>_scratch"`.
    pub few_shot: BTreeMap<String, f64>,
    pub stability: Vec<StabilityReport>,
}

impl MetricsReport {
    pub fn new(experiment: impl Into<String>, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            acc: None,
            linear_acc: None,
            few_shot: BTreeMap::new(),
            stability: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
