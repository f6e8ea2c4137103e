//! Convolution and pooling kernels on channels-last `H × W × C` tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// `[row][col][channel]`
    pub data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values cannot form a {height}x{width}x{channels} tensor",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn at(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    fn pixel(&self, row: usize, col: usize) -> &[T] {
        let s = (row * self.width + col) * self.channels;
        &self.data[s..s + self.channels]
    }
}

/// `[row][col][channel]` order, which is the storage order.
pub fn flatten<T: Real>(t: &Tensor3<T>) -> Vec<T> {
    t.data.clone()
}

/// Stride-1, zero-padded ("same") cross-correlation layer. Weights are laid
/// out `[filter][ky][kx][in_channel]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn weight_len(&self) -> usize {
        self.filters * self.kernel * self.kernel * self.in_channels
    }

    fn tap(&self, f: usize, ky: usize, kx: usize) -> &[T] {
        let s = ((f * self.kernel + ky) * self.kernel + kx) * self.in_channels;
        &self.weights[s..s + self.in_channels]
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.is_multiple_of(2) || self.kernel == 0 {
            return Err(Error::Shape(format!("kernel size {} is not odd", self.kernel)));
        }
        if self.weights.len() != self.weight_len() || self.biases.len() != self.filters {
            return Err(Error::Shape("conv parameters do not match declared shape".into()));
        }
        Ok(())
    }
}

/// Valid `(input offset, kernel tap)` pairs along one axis for output index
/// `o`: input index `o + k - pad` must fall in `0..n`.
fn taps(o: usize, n: usize, kernel: usize) -> impl Iterator<Item = (usize, usize)> {
    let pad = kernel / 2;
    (0..kernel).filter_map(move |k| {
        let i = (o + k).checked_sub(pad)?;
        (i < n).then_some((i, k))
    })
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Pre-activation of a same-padded convolution (bias included, no ReLU).
pub fn conv2d_pre<T: Real>(input: &Tensor3<T>, layer: &ConvLayer<T>) -> Result<Tensor3<T>> {
    if input.channels != layer.in_channels {
        return Err(Error::Shape(format!(
            "convolution expects {} channels, input has {}",
            layer.in_channels, input.channels
        )));
    }
    let (h, w, k) = (input.height, input.width, layer.kernel);
    let mut out = Tensor3::zeros(h, w, layer.filters);
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * layer.filters;
            let acc = &mut out.data[o..o + layer.filters];
            acc.copy_from_slice(&layer.biases);
            for (iy, ky) in taps(y, h, k) {
                for (ix, kx) in taps(x, w, k) {
                    let px = input.pixel(iy, ix);
                    for (f, a) in acc.iter_mut().enumerate() {
                        *a += dot(layer.tap(f, ky, kx), px);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Same-padded convolution followed by ReLU; spatial size is preserved.
pub fn conv2d_forward<T: Real>(input: &Tensor3<T>, layer: &ConvLayer<T>) -> Result<Tensor3<T>> {
    let mut out = conv2d_pre(input, layer)?;
    out.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
    Ok(out)
}

/// Given the gradient w.r.t. the pre-activation, accumulates weight and bias
/// gradients and optionally returns the input gradient. The latter is the
/// correlation of `d_pre` with the spatially flipped kernel.
pub fn conv2d_backward<T: Real>(
    input: &Tensor3<T>,
    layer: &ConvLayer<T>,
    d_pre: &Tensor3<T>,
    grad_w: &mut [T],
    grad_b: &mut [T],
    want_input_grad: bool,
) -> Option<Tensor3<T>> {
    let (h, w, k, c) = (input.height, input.width, layer.kernel, layer.in_channels);
    for y in 0..h {
        for x in 0..w {
            let d = d_pre.pixel(y, x);
            for (gb, &dv) in grad_b.iter_mut().zip(d) {
                *gb += dv;
            }
            for (iy, ky) in taps(y, h, k) {
                for (ix, kx) in taps(x, w, k) {
                    let px = input.pixel(iy, ix);
                    for (f, &dv) in d.iter().enumerate() {
                        if dv == T::zero() {
                            continue;
                        }
                        let s = ((f * k + ky) * k + kx) * c;
                        for (g, &v) in grad_w[s..s + c].iter_mut().zip(px) {
                            *g += dv * v;
                        }
                    }
                }
            }
        }
    }
    if !want_input_grad {
        return None;
    }
    let pad = k / 2;
    let mut d_in = Tensor3::zeros(h, w, c);
    for iy in 0..h {
        for ix in 0..w {
            let o = (iy * w + ix) * c;
            let acc = &mut d_in.data[o..o + c];
            // output (y, x) reads input (iy, ix) through tap (iy + pad - y, ix + pad - x)
            for ky in 0..k {
                let Some(y) = (iy + pad).checked_sub(ky).filter(|&y| y < h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(x) = (ix + pad).checked_sub(kx).filter(|&x| x < w) else {
                        continue;
                    };
                    for (f, &dv) in d_pre.pixel(y, x).iter().enumerate() {
                        if dv == T::zero() {
                            continue;
                        }
                        for (a, &wv) in acc.iter_mut().zip(layer.tap(f, ky, kx)) {
                            *a += dv * wv;
                        }
                    }
                }
            }
        }
    }
    Some(d_in)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            window: 2,
            stride: 2,
        }
    }
}

impl PoolSpec {
    /// Pooling is skipped on maps with a spatial side below the window.
    pub fn applies(&self, height: usize, width: usize) -> bool {
        height >= self.window && width >= self.window
    }

    pub fn output_side(&self, side: usize) -> usize {
        (side - self.window) / self.stride + 1
    }
}

/// Non-overlapping max pooling. Returns the pooled tensor and, per output
/// element, the flat input index it was taken from (first maximum in
/// row-major window order).
pub fn maxpool_forward<T: Real>(input: &Tensor3<T>, pool: PoolSpec) -> Result<(Tensor3<T>, Vec<usize>)> {
    if !pool.applies(input.height, input.width) {
        return Err(Error::Shape(format!(
            "{}x{} map is smaller than the {}x{} pooling window",
            input.height, input.width, pool.window, pool.window
        )));
    }
    let (oh, ow, c) = (
        pool.output_side(input.height),
        pool.output_side(input.width),
        input.channels,
    );
    let mut out = Tensor3::zeros(oh, ow, c);
    let mut argmax = vec![0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best_idx = usize::MAX;
                let mut best = T::neg_infinity();
                for dy in 0..pool.window {
                    for dx in 0..pool.window {
                        let (iy, ix) = (oy * pool.stride + dy, ox * pool.stride + dx);
                        let idx = (iy * input.width + ix) * c + ch;
                        if best_idx == usize::MAX || input.data[idx] > best {
                            best = input.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out.data[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each output gradient to its recorded argmax input position.
pub fn maxpool_backward<T: Real>(d_out: &Tensor3<T>, argmax: &[usize], input_shape: (usize, usize, usize)) -> Tensor3<T> {
    let mut d_in = Tensor3::zeros(input_shape.0, input_shape.1, input_shape.2);
    for (&g, &idx) in d_out.data.iter().zip(argmax) {
        d_in.data[idx] += g;
    }
    d_in
}
