//! Independent reference implementations shared by the integration tests.
//! None of these call into the library code they are compared against.

#![allow(dead_code)]

use patchland::raster::{BorderPolicy, LabelMap, RasterCube};
use patchland::synth::{generate_scene, Scene, SceneSpec};
use patchland::train::Network;

/// Mirror an index into `0..n` by repeated reflection about the edge samples.
pub fn mirror(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let last = n as isize - 1;
    loop {
        if i < 0 {
            i = -i;
        } else if i > last {
            i = 2 * last - i;
        } else {
            return i as usize;
        }
    }
}

/// `(row, col, label, window values)` for every admissible labeled pixel,
/// by scanning the whole image.
pub fn brute_force_patches(
    cube: &RasterCube,
    labels: &LabelMap,
    p: usize,
    policy: BorderPolicy,
) -> Vec<(usize, usize, u16, Vec<f32>)> {
    let r = (p / 2) as isize;
    let (rows, cols, bands) = (cube.rows() as isize, cube.cols() as isize, cube.bands());
    let mut out = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            let label = labels.get(row as usize, col as usize);
            if label == 0 {
                continue;
            }
            let fits = row - r >= 0 && col - r >= 0 && row + r < rows && col + r < cols;
            if policy == BorderPolicy::Skip && !fits {
                continue;
            }
            let mut values = Vec::new();
            for y in row - r..=row + r {
                for x in col - r..=col + r {
                    let (yy, xx) = (mirror(y, rows as usize), mirror(x, cols as usize));
                    for b in 0..bands {
                        values.push(cube.get(yy, xx, b));
                    }
                }
            }
            out.push((row as usize, col as usize, label, values));
        }
    }
    out
}

/// Same-padded stride-1 cross-correlation plus bias and ReLU, in f64.
/// `input` is `[h][w][cin]`, `weights` `[f][ky][kx][cin]`.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    input: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    weights: &[f64],
    biases: &[f64],
    filters: usize,
    k: usize,
) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; h * w * filters];
    for y in 0..h {
        for x in 0..w {
            for f in 0..filters {
                let mut acc = biases[f];
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = y as isize + ky as isize - r;
                        let ix = x as isize + kx as isize - r;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for c in 0..cin {
                            acc += input[(iy as usize * w + ix as usize) * cin + c]
                                * weights[((f * k + ky) * k + kx) * cin + c];
                        }
                    }
                }
                out[(y * w + x) * filters + f] = acc.max(0.0);
            }
        }
    }
    out
}

/// 2×2 stride-2 max pooling, floor on odd sides.
pub fn naive_pool(input: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(input[((2 * y + dy) * w + 2 * x + dx) * c + ch]);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d).exp()
}

/// `W(α) = Σα − ½ αᵀQα` with `Q_ij = y_i y_j K_ij`.
pub fn dual_value(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * q[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 ≤ α ≤ C, yᵀα = 0}`: `α = clip(v − λy)`
/// with `λ` found by bisection on the monotone map `λ ↦ yᵀα(λ)`.
pub fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> { v.iter().zip(y).map(|(&vi, &yi)| (vi - lam * yi).clamp(0.0, c)).collect() };
    let s = |lam: f64| -> f64 { at(lam).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if s(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient ascent on the SVM dual, with adaptive
/// restart. Returns the final iterate.
pub fn projected_gradient_dual(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64, iters: usize) -> Vec<f64> {
    let n = x.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * rbf(&x[i], &x[j], gamma)).collect())
        .collect();
    // Gershgorin bound on the largest eigenvalue.
    let lip = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lip;
    let grad = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * a[j]).sum::<f64>()).collect() };

    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    let mut best = dual_value(&q, &a);
    for _ in 0..iters {
        let g = grad(&z);
        let stepped: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi + step * gi).collect();
        let next = project(&stepped, y, c);
        let val = dual_value(&q, &next);
        if val < best {
            // restart momentum when the objective drops
            t = 1.0;
            z = a.clone();
            continue;
        }
        best = val;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&a)
            .map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax))
            .collect();
        a = next;
        t = t_next;
    }
    a
}

pub fn q_matrix(x: &[Vec<f64>], y: &[f64], gamma: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * rbf(&x[i], &x[j], gamma)).collect())
        .collect()
}

/// Central-difference check of `batch_gradient` for a network.
/// Coordinates whose ±h perturbation changes `pattern` (ReLU signs, pool
/// winners) sit on a kink and are skipped.
pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
}

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;

pub fn check_gradients<N, P>(net: &N, inputs: &[f64], targets: &[usize], pattern: P) -> GradCheck
where
    N: Network<f64> + Clone,
    P: Fn(&N) -> Vec<i64>,
{
    let batch: Vec<usize> = (0..targets.len()).collect();
    let (_, analytic) = patchland::train::batch_gradient(net, inputs, targets, &batch);
    let shapes = net.param_shapes();
    let mut out = GradCheck {
        max_rel: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (t, &len) in shapes.iter().enumerate() {
        for i in 0..len {
            let mut plus = net.clone();
            plus.params_mut()[t][i] += FD_STEP;
            let mut minus = net.clone();
            minus.params_mut()[t][i] -= FD_STEP;
            if pattern(&plus) != pattern(&minus) {
                out.skipped += 1;
                continue;
            }
            let lp = patchland::train::batch_gradient(&plus, inputs, targets, &batch).0;
            let lm = patchland::train::batch_gradient(&minus, inputs, targets, &batch).0;
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let a = analytic.tensors[t][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            out.max_rel = out.max_rel.max(rel);
            out.checked += 1;
        }
    }
    out
}

/// Scene used by the end-to-end checks.
#[allow(clippy::too_many_arguments)]
pub fn scene(rows: usize, cols: usize, bands: usize, k: usize, fields: usize, sigma: f64, sp: f64, seed: u64) -> Scene {
    generate_scene(&SceneSpec::random(rows, cols, bands, k, fields, sigma, sp, seed)).expect("scene")
}
