//! Mini-batch training loop shared by the MLP and the CNN.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{adagrad_step, sgd_step, OptimizerKind, OptimizerState};
use crate::real::Real;

/// Samples per gradient chunk. Chunks are reduced in index order, so the
/// summed gradient does not depend on the number of worker threads.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub adagrad_epsilon: f64,
    pub seed: u64,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 128,
            epochs: 2000,
            optimizer: OptimizerKind::Adagrad,
            adagrad_epsilon: 1e-8,
            seed: 0,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.adagrad_epsilon.is_nan() || self.adagrad_epsilon < 0.0 {
            return Err(Error::Config("adagrad_epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch.
    pub loss_trace: Vec<f64>,
    pub steps: usize,
}

/// Flat list of parameter-shaped buffers in a model-defined order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros(shapes: &[usize]) -> Self {
        Self {
            tensors: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            for x in t.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn max_abs(&self) -> T {
        self.tensors
            .iter()
            .flatten()
            .fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

/// A differentiable classifier over flat input vectors.
pub trait Network<T: Real>: Sync {
    fn input_len(&self) -> usize;

    fn param_shapes(&self) -> Vec<usize>;

    /// Adds the cross-entropy gradient of one sample into `grads` and returns
    /// that sample's loss.
    fn accumulate_sample(&self, x: &[T], target: usize, grads: &mut Gradients<T>) -> T;

    /// Parameter tensors in the same order as [`Network::param_shapes`].
    fn params_mut(&mut self) -> Vec<&mut [T]>;
}

/// Mean loss and mean gradient over `batch` (indices into `inputs`).
pub fn batch_gradient<T: Real, N: Network<T>>(
    net: &N,
    inputs: &[T],
    targets: &[usize],
    batch: &[usize],
) -> (T, Gradients<T>) {
    let d = net.input_len();
    let shapes = net.param_shapes();
    let partials: Vec<(T, Gradients<T>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = Gradients::zeros(&shapes);
            let mut loss = T::zero();
            for &i in chunk {
                loss += net.accumulate_sample(&inputs[i * d..(i + 1) * d], targets[i], &mut g);
            }
            (loss, g)
        })
        .collect();
    let mut total = Gradients::zeros(&shapes);
    let mut loss = T::zero();
    for (l, g) in &partials {
        loss += *l;
        total.add_assign(g);
    }
    let inv = T::one() / T::lit(batch.len() as f64);
    total.scale(inv);
    (loss * inv, total)
}

/// Seeded-shuffle mini-batch training. `inputs` holds `targets.len()` rows
/// of `net.input_len()` values.
pub fn train_network<T: Real, N: Network<T>>(
    net: &mut N,
    inputs: &[T],
    targets: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let n = targets.len();
    if n == 0 {
        return Err(Error::Data("no training samples".into()));
    }
    if inputs.len() != n * net.input_len() {
        return Err(Error::Shape(format!(
            "{} input values for {n} samples of length {}",
            inputs.len(),
            net.input_len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7a11);
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = OptimizerState::<T>::zeros_like(&net.param_shapes());
    let lr = T::lit(cfg.learning_rate);
    let eps = T::lit(cfg.adagrad_epsilon);
    let mut report = TrainReport::default();

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| report.steps >= m) {
                if seen > 0 {
                    report.loss_trace.push(epoch_loss / seen as f64);
                }
                break 'epochs;
            }
            let (loss, grads) = batch_gradient(net, inputs, targets, batch);
            let loss = loss.to_f64().unwrap_or(f64::NAN);
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch}, step {}",
                    report.steps
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            for ((param, grad), acc) in net
                .params_mut()
                .into_iter()
                .zip(&grads.tensors)
                .zip(&mut state.accumulators)
            {
                match cfg.optimizer {
                    OptimizerKind::Adagrad => adagrad_step(param, grad, acc, lr, eps),
                    OptimizerKind::Sgd => sgd_step(param, grad, lr),
                }
            }
            report.steps += 1;
        }
        report.loss_trace.push(epoch_loss / seen as f64);
    }
    Ok(report)
}
