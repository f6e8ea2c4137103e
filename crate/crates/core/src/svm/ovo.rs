use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_binary_smo, BinarySvm, SvmHyperparams};
use crate::error::{Error, Result};
use crate::raster::PatchDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMachine {
    /// `(lower, higher)` class id; the higher id is the `+1` side.
    pub pair: (u16, u16),
    #[serde(flatten)]
    pub machine: BinarySvm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub class_ids: Vec<u16>,
    pub feature_length: usize,
    pub machines: Vec<PairMachine>,
}

impl SvmModel {
    pub fn validate(&self) -> Result<()> {
        let k = self.class_ids.len();
        if k < 2 || self.class_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Shape("SVM class ids must be sorted, distinct and at least two".into()));
        }
        if self.machines.len() != k * (k - 1) / 2 {
            return Err(Error::Shape(format!(
                "{} classes need {} pairwise machines, found {}",
                k,
                k * (k - 1) / 2,
                self.machines.len()
            )));
        }
        let mut idx = 0;
        for a in 0..k {
            for b in a + 1..k {
                let m = &self.machines[idx];
                if m.pair != (self.class_ids[a], self.class_ids[b]) {
                    return Err(Error::Shape(format!("machine {idx} has unexpected pair {:?}", m.pair)));
                }
                if m.machine.support_vectors.iter().any(|sv| sv.len() != self.feature_length) {
                    return Err(Error::Shape(format!("machine {idx} has wrong feature length")));
                }
                idx += 1;
            }
        }
        Ok(())
    }

    /// Per-machine decision values, in `machines` order.
    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.feature_length {
            return Err(Error::Shape(format!(
                "SVM expects {} features, got {}",
                self.feature_length,
                x.len()
            )));
        }
        Ok(self.machines.iter().map(|m| m.machine.decision_unchecked(x)).collect())
    }
}

/// One machine per class pair, each trained on that pair's samples only.
/// Machines are independent and train in parallel.
pub fn train_ovo(train: &PatchDataset, hp: &SvmHyperparams, seed: u64) -> Result<SvmModel> {
    hp.validate()?;
    let k = train.class_count();
    if k < 2 {
        return Err(Error::Data("one-vs-one needs at least two classes".into()));
    }
    let features: Vec<Vec<f64>> = train
        .patches
        .iter()
        .map(|p| p.values.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let classes = train.class_indices();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();

    let machines = pairs
        .par_iter()
        .enumerate()
        .map(|(idx, &(a, b))| {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (f, &c) in features.iter().zip(&classes) {
                if c == a || c == b {
                    x.push(f.clone());
                    y.push(if c == a { -1i8 } else { 1 });
                }
            }
            let pair_seed = seed.wrapping_add((idx as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let machine = train_binary_smo(&x, &y, hp, pair_seed)?;
            Ok(PairMachine {
                pair: (train.class_ids[a], train.class_ids[b]),
                machine,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SvmModel {
        class_ids: train.class_ids.clone(),
        feature_length: train.feature_length(),
        machines,
    })
}

/// Majority vote. A decision value of exactly zero votes for the higher id.
/// Ties go to the class whose winning votes carry the largest summed
/// |decision|, then to the lowest class id.
pub fn predict(model: &SvmModel, x: &[f64]) -> Result<u16> {
    let values = model.decision_values(x)?;
    let k = model.class_ids.len();
    let mut votes = vec![0usize; k];
    let mut strength = vec![0.0f64; k];
    let mut idx = 0;
    for a in 0..k {
        for b in a + 1..k {
            let d = values[idx];
            let winner = if d >= 0.0 { b } else { a };
            votes[winner] += 1;
            strength[winner] += d.abs();
            idx += 1;
        }
    }
    let top = *votes.iter().max().unwrap();
    let mut best = usize::MAX;
    for c in (0..k).filter(|&c| votes[c] == top) {
        if best == usize::MAX || strength[c] > strength[best] {
            best = c;
        }
    }
    Ok(model.class_ids[best])
}
