//! Soft-margin RBF support vector machines.
//!
//! Binary machines are trained with sequential minimal optimization; the
//! multiclass model is a one-vs-one vote over all class pairs.

mod ovo;
mod smo;

pub use ovo::{predict, train_ovo, PairMachine, SvmModel};
pub use smo::{dual_objective, train_binary_smo};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmHyperparams {
    pub c: f64,
    pub gamma: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_passes")]
    pub max_passes: usize,
}

fn default_tol() -> f64 {
    1e-3
}

fn default_max_passes() -> usize {
    200
}

impl SvmHyperparams {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            tol: default_tol(),
            max_passes: default_max_passes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.c) || !positive(self.gamma) || !positive(self.tol) {
            return Err(Error::Config(format!(
                "SVM needs C, gamma and tol > 0, got C={} gamma={} tol={}",
                self.c, self.gamma, self.tol
            )));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("max_passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// `exp(-gamma · ‖x − y‖²)`
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "kernel arguments have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(rbf(x, y, gamma))
}

pub(crate) fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Trained two-class machine. Only vectors with a positive dual coefficient
/// are kept.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinarySvm {
    pub alphas: Vec<f64>,
    pub sv_labels: Vec<i8>,
    pub bias: f64,
    pub gamma: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// False when the solver stopped on its pass limit.
    #[serde(skip, default = "converged_default")]
    pub converged: bool,
    /// Training-set row of each support vector; not persisted.
    #[serde(skip)]
    pub support_indices: Vec<usize>,
}

fn converged_default() -> bool {
    true
}

/// Equal when they compute the same decision function; solver
/// bookkeeping is ignored.
impl PartialEq for BinarySvm {
    fn eq(&self, other: &Self) -> bool {
        self.alphas == other.alphas
            && self.sv_labels == other.sv_labels
            && self.bias == other.bias
            && self.gamma == other.gamma
            && self.support_vectors == other.support_vectors
    }
}

impl BinarySvm {
    pub fn feature_length(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    /// `Σ αᵢ yᵢ K(svᵢ, x) + b`
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.feature_length() {
            if d != x.len() {
                return Err(Error::Shape(format!(
                    "machine expects {d} features, got {}",
                    x.len()
                )));
            }
        }
        Ok(self.decision_unchecked(x))
    }

    pub(crate) fn decision_unchecked(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.alphas)
            .zip(&self.sv_labels)
            .map(|((sv, &a), &y)| a * f64::from(y) * rbf(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }
}

pub fn decision(m: &BinarySvm, x: &[f64]) -> Result<f64> {
    m.decision(x)
}
