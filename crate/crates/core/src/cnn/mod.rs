//! 2D convolutional classifier: (conv → ReLU → 2×2 max-pool) per conv layer,
//! flatten, ReLU dense layers, softmax output.

mod layers;

pub use layers::{
    conv2d_backward, conv2d_forward, conv2d_pre, flatten, maxpool_backward, maxpool_forward, ConvLayer,
    PoolSpec, Tensor3,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{affine_backward, affine_forward, he_uniform};
use crate::error::{Error, Result};
use crate::nn::{argmax, cross_entropy, dataset_tensors, relu, softmax, softmax_xent_delta};
use crate::raster::PatchDataset;
use crate::real::Real;
use crate::train::{train_network, Gradients, Network, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnArch {
    /// Filter count of each convolution layer.
    pub filters: Vec<usize>,
    /// Widths of the hidden dense layers after flattening.
    pub fc: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
}

fn default_kernel() -> usize {
    5
}

impl CnnArch {
    pub fn new(filters: &[usize], fc: &[usize]) -> Self {
        Self {
            filters: filters.to_vec(),
            fc: fc.to_vec(),
            kernel: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() || self.filters.contains(&0) || self.fc.contains(&0) {
            return Err(Error::Config(format!(
                "CNN needs at least one conv layer and positive widths, got {:?}/{:?}",
                self.filters, self.fc
            )));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel size {} must be odd", self.kernel)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputGeometry {
    pub size: usize,
    pub bands: usize,
}

/// Spatial side after each conv stage (pooling skipped below the window).
pub fn stage_sides(size: usize, stages: usize, pool: PoolSpec) -> Vec<usize> {
    let mut sides = Vec::with_capacity(stages);
    let mut s = size;
    for _ in 0..stages {
        if pool.applies(s, s) {
            s = pool.output_side(s);
        }
        sides.push(s);
    }
    sides
}

pub fn flatten_len(size: usize, arch: &CnnArch, pool: PoolSpec) -> usize {
    let side = *stage_sides(size, arch.filters.len(), pool).last().unwrap();
    side * side * arch.filters.last().unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CnnModel<T> {
    pub arch: CnnArch,
    pub class_ids: Vec<u16>,
    pub input_geometry: InputGeometry,
    pub pool: PoolSpec,
    pub conv: Vec<ConvLayer<T>>,
    pub fc_weights: Vec<Vec<T>>,
    pub fc_biases: Vec<Vec<T>>,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ConvStage<T> {
    pub input: Tensor3<T>,
    pub pre: Tensor3<T>,
    pub post: Tensor3<T>,
    /// Pooled map and argmax indices into `post`, when pooling applied.
    pub pooled: Option<(Tensor3<T>, Vec<usize>)>,
}

impl<T: Real> ConvStage<T> {
    pub fn output(&self) -> &Tensor3<T> {
        self.pooled.as_ref().map(|(t, _)| t).unwrap_or(&self.post)
    }
}

#[derive(Debug, Clone)]
pub struct CnnCache<T> {
    pub stages: Vec<ConvStage<T>>,
    /// `dense_inputs[0]` is the flattened feature vector.
    pub dense_inputs: Vec<Vec<T>>,
    pub dense_pre: Vec<Vec<T>>,
    pub probs: Vec<T>,
}

pub fn init_cnn<T: Real>(
    arch: &CnnArch,
    geometry: InputGeometry,
    class_ids: Vec<u16>,
    seed: u64,
) -> Result<CnnModel<T>> {
    arch.validate()?;
    if geometry.size == 0 || geometry.size.is_multiple_of(2) || geometry.bands == 0 {
        return Err(Error::Config(format!(
            "input geometry {}x{}x{} is not an odd square patch",
            geometry.size, geometry.size, geometry.bands
        )));
    }
    if class_ids.len() < 2 {
        return Err(Error::Config("at least two classes are needed".into()));
    }
    let pool = PoolSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = Vec::new();
    let mut cin = geometry.bands;
    for &filters in &arch.filters {
        let fan_in = arch.kernel * arch.kernel * cin;
        conv.push(ConvLayer {
            in_channels: cin,
            filters,
            kernel: arch.kernel,
            weights: he_uniform(filters * fan_in, fan_in, &mut rng),
            biases: vec![T::zero(); filters],
        });
        cin = filters;
    }
    let mut sizes = vec![flatten_len(geometry.size, arch, pool)];
    sizes.extend_from_slice(&arch.fc);
    sizes.push(class_ids.len());
    let mut fc_weights = Vec::new();
    let mut fc_biases = Vec::new();
    for pair in sizes.windows(2) {
        fc_weights.push(he_uniform(pair[0] * pair[1], pair[0], &mut rng));
        fc_biases.push(vec![T::zero(); pair[1]]);
    }
    Ok(CnnModel {
        arch: arch.clone(),
        class_ids,
        input_geometry: geometry,
        pool,
        conv,
        fc_weights,
        fc_biases,
    })
}

impl<T: Real> CnnModel<T> {
    pub fn input_len(&self) -> usize {
        let g = self.input_geometry;
        g.size * g.size * g.bands
    }

    pub fn dense_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![flatten_len(self.input_geometry.size, &self.arch, self.pool)];
        sizes.extend_from_slice(&self.arch.fc);
        sizes.push(self.class_ids.len());
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.conv.len() != self.arch.filters.len() {
            return Err(Error::Shape("conv layer count differs from architecture".into()));
        }
        let mut cin = self.input_geometry.bands;
        for (layer, &f) in self.conv.iter().zip(&self.arch.filters) {
            layer.validate()?;
            if layer.in_channels != cin || layer.filters != f || layer.kernel != self.arch.kernel {
                return Err(Error::Shape("conv layer shape differs from architecture".into()));
            }
            cin = f;
        }
        let sizes = self.dense_sizes();
        if self.fc_weights.len() != sizes.len() - 1 || self.fc_biases.len() != sizes.len() - 1 {
            return Err(Error::Shape("dense layer count differs from architecture".into()));
        }
        for (l, pair) in sizes.windows(2).enumerate() {
            if self.fc_weights[l].len() != pair[0] * pair[1] || self.fc_biases[l].len() != pair[1] {
                return Err(Error::Shape(format!("dense layer {l} has wrong parameter shape")));
            }
        }
        Ok(())
    }
}

pub fn cnn_forward<T: Real>(m: &CnnModel<T>, patch: &[T]) -> Result<(Vec<T>, CnnCache<T>)> {
    if patch.len() != m.input_len() {
        return Err(Error::Shape(format!(
            "CNN expects a {0}x{0}x{1} patch ({2} values), got {3}",
            m.input_geometry.size,
            m.input_geometry.bands,
            m.input_len(),
            patch.len()
        )));
    }
    let g = m.input_geometry;
    let mut x = Tensor3::from_vec(g.size, g.size, g.bands, patch.to_vec())?;
    let mut stages = Vec::with_capacity(m.conv.len());
    for layer in &m.conv {
        let pre = conv2d_pre(&x, layer)?;
        let mut post = pre.clone();
        post.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
        let pooled = if m.pool.applies(post.height, post.width) {
            Some(maxpool_forward(&post, m.pool)?)
        } else {
            None
        };
        let stage = ConvStage {
            input: x,
            pre,
            post,
            pooled,
        };
        x = stage.output().clone();
        stages.push(stage);
    }
    let mut dense_inputs = vec![flatten(&x)];
    let mut dense_pre = Vec::with_capacity(m.fc_weights.len());
    let n = m.fc_weights.len();
    for l in 0..n {
        let mut z = Vec::new();
        affine_forward(&m.fc_weights[l], &m.fc_biases[l], &dense_inputs[l], &mut z);
        if l + 1 < n {
            dense_inputs.push(relu(&z));
        }
        dense_pre.push(z);
    }
    let probs = softmax(dense_pre.last().unwrap());
    Ok((
        probs.clone(),
        CnnCache {
            stages,
            dense_inputs,
            dense_pre,
            probs,
        },
    ))
}

fn backprop<T: Real>(
    m: &CnnModel<T>,
    cache: &CnnCache<T>,
    target: usize,
    grads: &mut Gradients<T>,
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let n_conv = m.conv.len();
    let n_dense = m.fc_weights.len();
    let mut delta = softmax_xent_delta(&cache.probs, target);
    let mut dx = Vec::new();
    for l in (0..n_dense).rev() {
        let slot = 2 * (n_conv + l);
        let (gw, rest) = grads.tensors[slot..].split_at_mut(1);
        affine_backward(
            &m.fc_weights[l],
            &cache.dense_inputs[l],
            &delta,
            &mut gw[0],
            &mut rest[0],
            Some(&mut dx),
        );
        delta = if l > 0 {
            dx.iter()
                .zip(&cache.dense_pre[l - 1])
                .map(|(&d, &z)| if z > T::zero() { d } else { T::zero() })
                .collect()
        } else {
            std::mem::take(&mut dx)
        };
    }

    // `delta` is now the gradient w.r.t. the flattened last-stage output.
    let last = cache.stages.last().unwrap().output();
    let mut d_out = Tensor3 {
        height: last.height,
        width: last.width,
        channels: last.channels,
        data: delta,
    };
    for l in (0..n_conv).rev() {
        let stage = &cache.stages[l];
        let post = &stage.post;
        let mut d_pre = match &stage.pooled {
            Some((_, argmax)) => maxpool_backward(&d_out, argmax, (post.height, post.width, post.channels)),
            None => d_out,
        };
        for (d, &z) in d_pre.data.iter_mut().zip(&stage.pre.data) {
            if z <= T::zero() {
                *d = T::zero();
            }
        }
        let (gw, rest) = grads.tensors[2 * l..].split_at_mut(1);
        let need_input = l > 0 || want_input_grad;
        {
            let d_in = conv2d_backward(&stage.input, &m.conv[l], &d_pre, &mut gw[0], &mut rest[0], need_input)?;
            d_out = d_in
        }
    }
    Some(d_out.data)
}

/// Exact cross-entropy gradients ordered `[conv W, conv b]…, [dense W, dense b]…`.
pub fn cnn_backward<T: Real>(m: &CnnModel<T>, cache: &CnnCache<T>, target: usize) -> Gradients<T> {
    let mut g = Gradients::zeros(&m.param_shapes());
    backprop(m, cache, target, &mut g, false);
    g
}

/// Gradient of the loss w.r.t. the input patch.
pub fn cnn_input_gradient<T: Real>(m: &CnnModel<T>, patch: &[T], target: usize) -> Result<Vec<T>> {
    let (_, cache) = cnn_forward(m, patch)?;
    let mut g = Gradients::zeros(&m.param_shapes());
    Ok(backprop(m, &cache, target, &mut g, true).expect("input gradient requested"))
}

impl<T: Real> Network<T> for CnnModel<T> {
    fn input_len(&self) -> usize {
        CnnModel::input_len(self)
    }

    fn param_shapes(&self) -> Vec<usize> {
        let conv = self.conv.iter().flat_map(|c| [c.weights.len(), c.biases.len()]);
        let dense = self
            .fc_weights
            .iter()
            .zip(&self.fc_biases)
            .flat_map(|(w, b)| [w.len(), b.len()]);
        conv.chain(dense).collect()
    }

    fn accumulate_sample(&self, x: &[T], target: usize, grads: &mut Gradients<T>) -> T {
        let (probs, cache) = cnn_forward(self, x).expect("input length checked by trainer");
        backprop(self, &cache, target, grads, false);
        cross_entropy(&probs, target)
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for c in &mut self.conv {
            out.push(&mut c.weights);
            out.push(&mut c.biases);
        }
        for (w, b) in self.fc_weights.iter_mut().zip(self.fc_biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }
}

pub fn cnn_predict<T: Real>(m: &CnnModel<T>, patch: &[T]) -> Result<u16> {
    let (probs, _) = cnn_forward(m, patch)?;
    Ok(m.class_ids[argmax(&probs)])
}

pub fn train_cnn(ds: &PatchDataset, arch: &CnnArch, cfg: &TrainConfig) -> Result<(CnnModel<f32>, TrainReport)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if ds.class_count() < 2 {
        return Err(Error::Data("at least two classes are needed to train".into()));
    }
    let geometry = InputGeometry {
        size: ds.size,
        bands: ds.bands,
    };
    let mut model = init_cnn::<f32>(arch, geometry, ds.class_ids.clone(), cfg.seed)?;
    let (inputs, targets) = dataset_tensors::<f32>(ds);
    let report = train_network(&mut model, &inputs, &targets, cfg)?;
    Ok((model, report))
}
