//! Fully-connected ReLU network with a softmax output layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{affine_backward, affine_forward, he_uniform};
use crate::error::{Error, Result};
use crate::raster::PatchDataset;
use crate::real::Real;
use crate::train::{train_network, Gradients, Network, TrainReport};

pub use crate::train::TrainConfig;

pub fn relu<T: Real>(v: &[T]) -> Vec<T> {
    v.iter().map(|&x| x.max(T::zero())).collect()
}

/// Max-subtracted softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let exps: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln p[target]` with `p` clamped below at 1e-12.
pub fn cross_entropy<T: Real>(probs: &[T], target: usize) -> T {
    -probs[target].max(T::lit(1e-12)).ln()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Gradient of cross-entropy w.r.t. softmax logits.
pub(crate) fn softmax_xent_delta<T: Real>(probs: &[T], target: usize) -> Vec<T> {
    let mut d = probs.to_vec();
    d[target] -= T::one();
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MlpModel<T> {
    /// Input length, hidden widths, then the class count.
    pub layer_sizes: Vec<usize>,
    pub class_ids: Vec<u16>,
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    /// `activations[0]` is the input; `activations[l]` the ReLU output of
    /// hidden layer `l`.
    pub activations: Vec<Vec<T>>,
    /// Pre-activation of every layer, the last being the logits.
    pub pre: Vec<Vec<T>>,
    pub probs: Vec<T>,
}

pub fn init_mlp<T: Real>(layer_sizes: &[usize], class_ids: Vec<u16>, seed: u64) -> Result<MlpModel<T>> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::Config(format!(
            "layer sizes must be at least [input, output] and all positive, got {layer_sizes:?}"
        )));
    }
    if class_ids.len() != *layer_sizes.last().unwrap() {
        return Err(Error::Config(format!(
            "{} class ids for an output layer of {}",
            class_ids.len(),
            layer_sizes.last().unwrap()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in layer_sizes.windows(2) {
        weights.push(he_uniform(pair[0] * pair[1], pair[0], &mut rng));
        biases.push(vec![T::zero(); pair[1]]);
    }
    Ok(MlpModel {
        layer_sizes: layer_sizes.to_vec(),
        class_ids,
        weights,
        biases,
    })
}

impl<T: Real> MlpModel<T> {
    pub fn input_len(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Checks shape chaining and finiteness, e.g. after deserializing.
    pub fn validate(&self) -> Result<()> {
        let layers = self.layer_sizes.len().saturating_sub(1);
        if layers == 0 || self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::Shape("MLP layer lists disagree".into()));
        }
        for (l, pair) in self.layer_sizes.windows(2).enumerate() {
            if self.weights[l].len() != pair[0] * pair[1] || self.biases[l].len() != pair[1] {
                return Err(Error::Shape(format!("MLP layer {l} has wrong parameter shape")));
            }
        }
        if self.class_ids.len() != self.class_count() {
            return Err(Error::Shape("class ids do not match the output layer".into()));
        }
        let finite = self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numerical("non-finite MLP parameter".into()));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> MlpModel<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::lit(x.to_f64().unwrap())).collect();
        MlpModel {
            layer_sizes: self.layer_sizes.clone(),
            class_ids: self.class_ids.clone(),
            weights: self.weights.iter().map(conv).collect(),
            biases: self.biases.iter().map(conv).collect(),
        }
    }
}

pub fn mlp_forward<T: Real>(m: &MlpModel<T>, x: &[T]) -> Result<(Vec<T>, MlpCache<T>)> {
    if x.len() != m.input_len() {
        return Err(Error::Shape(format!(
            "MLP expects {} inputs, got {}",
            m.input_len(),
            x.len()
        )));
    }
    let layers = m.weights.len();
    let mut activations = vec![x.to_vec()];
    let mut pre = Vec::with_capacity(layers);
    for l in 0..layers {
        let mut z = Vec::new();
        affine_forward(&m.weights[l], &m.biases[l], &activations[l], &mut z);
        if l + 1 < layers {
            activations.push(relu(&z));
        }
        pre.push(z);
    }
    let probs = softmax(pre.last().unwrap());
    Ok((
        probs.clone(),
        MlpCache {
            activations,
            pre,
            probs,
        },
    ))
}

fn mlp_accumulate<T: Real>(m: &MlpModel<T>, cache: &MlpCache<T>, target: usize, grads: &mut Gradients<T>) {
    let layers = m.weights.len();
    let mut delta = softmax_xent_delta(&cache.probs, target);
    let mut dx = Vec::new();
    for l in (0..layers).rev() {
        let (gw, rest) = grads.tensors[2 * l..].split_at_mut(1);
        affine_backward(
            &m.weights[l],
            &cache.activations[l],
            &delta,
            &mut gw[0],
            &mut rest[0],
            (l > 0).then_some(&mut dx),
        );
        if l > 0 {
            // ReLU gate; the subgradient at exactly 0 is 0.
            delta = dx
                .iter()
                .zip(&cache.pre[l - 1])
                .map(|(&d, &z)| if z > T::zero() { d } else { T::zero() })
                .collect();
        }
    }
}

/// Exact cross-entropy gradients, ordered `[W0, b0, W1, b1, …]`.
pub fn mlp_backward<T: Real>(m: &MlpModel<T>, cache: &MlpCache<T>, target: usize) -> Gradients<T> {
    let mut g = Gradients::zeros(&m.param_shapes());
    mlp_accumulate(m, cache, target, &mut g);
    g
}

impl<T: Real> Network<T> for MlpModel<T> {
    fn input_len(&self) -> usize {
        self.layer_sizes[0]
    }

    fn param_shapes(&self) -> Vec<usize> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.len(), b.len()])
            .collect()
    }

    fn accumulate_sample(&self, x: &[T], target: usize, grads: &mut Gradients<T>) -> T {
        let (probs, cache) = mlp_forward(self, x).expect("input length checked by trainer");
        mlp_accumulate(self, &cache, target, grads);
        cross_entropy(&probs, target)
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }
}

pub fn mlp_predict<T: Real>(m: &MlpModel<T>, x: &[T]) -> Result<u16> {
    let (probs, _) = mlp_forward(m, x)?;
    Ok(m.class_ids[argmax(&probs)])
}

/// Flattened patches as one contiguous buffer plus class indices.
pub fn dataset_tensors<T: Real>(ds: &PatchDataset) -> (Vec<T>, Vec<usize>) {
    let inputs = ds
        .patches
        .iter()
        .flat_map(|p| p.values.iter().map(|&v| T::from_f32_value(v)))
        .collect();
    (inputs, ds.class_indices())
}

/// Trains a `[input, hidden…, K]` network on flattened patches.
pub fn train_mlp(ds: &PatchDataset, hidden: &[usize], cfg: &TrainConfig) -> Result<(MlpModel<f32>, TrainReport)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if ds.class_count() < 2 {
        return Err(Error::Data("at least two classes are needed to train".into()));
    }
    let mut sizes = vec![ds.feature_length()];
    sizes.extend_from_slice(hidden);
    sizes.push(ds.class_count());
    let mut model = init_mlp::<f32>(&sizes, ds.class_ids.clone(), cfg.seed)?;
    let (inputs, targets) = dataset_tensors::<f32>(ds);
    let report = train_network(&mut model, &inputs, &targets, cfg)?;
    Ok((model, report))
}
