//! Parameter update rules.

use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adagrad,
    Sgd,
}

/// Accumulated squared gradients, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub accumulators: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn zeros_like(shapes: &[usize]) -> Self {
        Self {
            accumulators: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }
}

/// `acc += g²; p -= lr · g / (√acc + ε)`
pub fn adagrad_step<T: Real>(params: &mut [T], grads: &[T], acc: &mut [T], lr: T, epsilon: T) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), acc.len());
    for ((p, &g), a) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
        *a += g * g;
        *p -= lr * g / (a.sqrt() + epsilon);
    }
}

pub fn sgd_step<T: Real>(params: &mut [T], grads: &[T], lr: T) {
    assert_eq!(params.len(), grads.len());
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}
