//! Fully-connected layer kernels shared by the MLP and the CNN head.
//!
//! Weights are `outputs × inputs`, row-major.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::real::Real;

/// `out = W x + b`
pub fn affine_forward<T: Real>(weights: &[T], biases: &[T], x: &[T], out: &mut Vec<T>) {
    let n_in = x.len();
    out.clear();
    out.extend(
        weights
            .chunks_exact(n_in)
            .zip(biases)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v)),
    );
}

/// Accumulates `dW += dz xᵀ`, `db += dz` and, if requested, writes `dx = Wᵀ dz`.
pub fn affine_backward<T: Real>(
    weights: &[T],
    x: &[T],
    dz: &[T],
    grad_w: &mut [T],
    grad_b: &mut [T],
    dx: Option<&mut Vec<T>>,
) {
    let n_in = x.len();
    for ((gw_row, gb), &d) in grad_w.chunks_exact_mut(n_in).zip(grad_b.iter_mut()).zip(dz) {
        *gb += d;
        if d == T::zero() {
            continue;
        }
        for (g, &v) in gw_row.iter_mut().zip(x) {
            *g += d * v;
        }
    }
    if let Some(dx) = dx {
        dx.clear();
        dx.resize(n_in, T::zero());
        for (row, &d) in weights.chunks_exact(n_in).zip(dz) {
            if d == T::zero() {
                continue;
            }
            for (o, &w) in dx.iter_mut().zip(row) {
                *o += d * w;
            }
        }
    }
}

/// He-uniform draw: `U(-√(6/fan_in), √(6/fan_in))`.
pub fn he_uniform<T: Real, R: Rng>(count: usize, fan_in: usize, rng: &mut R) -> Vec<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    (0..count).map(|_| T::lit(dist.sample(rng))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_matches_hand_computation() {
        let w = [1.0, 2.0, -1.0, 0.5];
        let b = [0.5, -1.0];
        let mut out = Vec::new();
        affine_forward(&w, &b, &[3.0, 4.0], &mut out);
        assert_eq!(out, vec![11.5, -2.0]);
    }

    #[test]
    fn backward_accumulates() {
        let w = [1.0, 2.0, -1.0, 0.5];
        let mut gw = [0.0; 4];
        let mut gb = [0.0; 2];
        let mut dx = Vec::new();
        affine_backward(&w, &[3.0, 4.0], &[1.0, 2.0], &mut gw, &mut gb, Some(&mut dx));
        assert_eq!(gw, [3.0, 4.0, 6.0, 8.0]);
        assert_eq!(gb, [1.0, 2.0]);
        assert_eq!(dx, vec![-1.0, 3.0]);
    }

    #[test]
    fn he_bounds_hold_over_many_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fan_in = 37;
        let draws: Vec<f64> = he_uniform(100_000, fan_in, &mut rng);
        let bound = (6.0 / fan_in as f64).sqrt();
        assert!(draws.iter().all(|w| w.abs() <= bound));
        let max = draws.iter().cloned().fold(0.0, f64::max);
        assert!(max > 0.99 * bound);
    }
}
