//! Accuracy assessment, patch-size sweeps and classified maps.

mod map;
mod sweep;

pub use map::{classify_scene, parse_ppm, render_map, ClassPalette, PatchClassifier};
pub use sweep::{sweep_patch_sizes, sweep_with, SweepCsvWriter, SweepResult, SweepRow, CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are reference classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_ids: Vec<u16>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Per-class producer's accuracy (recall), `None` for absent classes.
    pub fn recall(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect()
    }
}

pub fn confusion(predictions: &[u16], truth: &[u16], class_ids: &[u16]) -> Result<ConfusionMatrix> {
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} reference labels",
            predictions.len(),
            truth.len()
        )));
    }
    let k = class_ids.len();
    let index = |l: u16| {
        class_ids
            .iter()
            .position(|&c| c == l)
            .ok_or_else(|| Error::Data(format!("label {l} is not one of {class_ids:?}")))
    };
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &t) in predictions.iter().zip(truth) {
        counts[index(t)?][index(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        class_ids: class_ids.to_vec(),
        counts,
    })
}

/// `100 · trace / total`
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("confusion matrix is empty".into()));
    }
    Ok(100.0 * cm.trace() as f64 / total as f64)
}

/// Per-run metrics document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub classifier: String,
    pub p: usize,
    pub seed: u64,
    pub overall_accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
    pub class_ids: Vec<u16>,
    pub train_size: usize,
    pub test_size: usize,
}
