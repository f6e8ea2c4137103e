//! Platt's sequential minimal optimization for the soft-margin dual
//!
//! ```text
//! max W(α) = Σ αᵢ − ½ Σᵢⱼ αᵢ αⱼ yᵢ yⱼ K(xᵢ, xⱼ)   s.t. 0 ≤ αᵢ ≤ C, Σ αᵢ yᵢ = 0
//! ```
//!
//! The main loop follows Platt (alternating full and non-bound sweeps,
//! second choice by maximal |E₁ − E₂| from the error cache). A short
//! maximal-violating-pair phase then drives the duality gap well below the
//! KKT tolerance so that small problems reach the exact optimum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{rbf, BinarySvm, SvmHyperparams};
use crate::error::{Error, Result};

/// Gap between the most violating pair at which the polish phase stops.
const POLISH_GAP: f64 = 1e-10;
/// Relative α change below which a pair step counts as no progress.
const STEP_EPS: f64 = 1e-12;

struct Solver<'a> {
    y: &'a [f64],
    gram: Vec<f64>,
    n: usize,
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    /// `Σⱼ αⱼ yⱼ K(xᵢ, xⱼ) − yᵢ`, i.e. the error without the bias.
    f: Vec<f64>,
    bias: f64,
}

impl Solver<'_> {
    fn k(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.n + j]
    }

    fn error(&self, i: usize) -> f64 {
        self.f[i] + self.bias
    }

    fn is_free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.error(i1), self.error(i2));
        let s = y1 * y2;
        let c = self.c;
        let (lo, hi) = if s < 0.0 {
            ((a2 - a1).max(0.0), (c + a2 - a1).min(c))
        } else {
            ((a1 + a2 - c).max(0.0), (a1 + a2).min(c))
        };
        if hi - lo <= 0.0 {
            return false;
        }
        let (k11, k12, k22) = (self.k(i1, i1), self.k(i1, i2), self.k(i2, i2));
        let eta = k11 + k22 - 2.0 * k12;
        // W along the constraint line, as a function of t = a2_new − a2.
        let slope = y2 * (e1 - e2);
        let mut new_a2 = if eta > 0.0 {
            (a2 + slope / eta).clamp(lo, hi)
        } else {
            let gain = |t: f64| slope * t - 0.5 * eta * t * t;
            let (g_lo, g_hi) = (gain(lo - a2), gain(hi - a2));
            if g_lo > g_hi + 1e-12 {
                lo
            } else if g_hi > g_lo + 1e-12 {
                hi
            } else {
                a2
            }
        };
        if new_a2 < 1e-14 * c {
            new_a2 = 0.0;
        } else if new_a2 > c * (1.0 - 1e-14) {
            new_a2 = c;
        }
        if (new_a2 - a2).abs() < STEP_EPS * (new_a2 + a2 + STEP_EPS) {
            return false;
        }
        let mut new_a1 = a1 + s * (a2 - new_a2);
        if new_a1 < 1e-14 * c {
            new_a1 = 0.0;
        } else if new_a1 > c * (1.0 - 1e-14) {
            new_a1 = c;
        }
        let (d1, d2) = (new_a1 - a1, new_a2 - a2);

        let b1 = self.bias - e1 - y1 * d1 * k11 - y2 * d2 * k12;
        let b2 = self.bias - e2 - y1 * d1 * k12 - y2 * d2 * k22;
        self.alpha[i1] = new_a1;
        self.alpha[i2] = new_a2;
        self.bias = if self.is_free(i1) {
            b1
        } else if self.is_free(i2) {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let (w1, w2) = (y1 * d1, y2 * d2);
        for i in 0..self.n {
            self.f[i] += w1 * self.gram[i * self.n + i1] + w2 * self.gram[i * self.n + i2];
        }
        true
    }

    fn examine(&mut self, i2: usize, rng: &mut ChaCha8Rng) -> bool {
        let r2 = self.error(i2) * self.y[i2];
        let a2 = self.alpha[i2];
        let violates = (r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0);
        if !violates {
            return false;
        }
        let free: Vec<usize> = (0..self.n).filter(|&i| self.is_free(i)).collect();
        if free.len() > 1 {
            let f2 = self.f[i2];
            let i1 = free
                .iter()
                .copied()
                .max_by(|&a, &b| (self.f[a] - f2).abs().total_cmp(&(self.f[b] - f2).abs()))
                .unwrap();
            if self.take_step(i1, i2) {
                return true;
            }
        }
        if !free.is_empty() {
            let start = rng.random_range(0..free.len());
            for k in 0..free.len() {
                if self.take_step(free[(start + k) % free.len()], i2) {
                    return true;
                }
            }
        }
        let start = rng.random_range(0..self.n);
        for k in 0..self.n {
            if self.take_step((start + k) % self.n, i2) {
                return true;
            }
        }
        false
    }

    /// Indices with `αᵢ` free to move up (`up`) or down (`low`) along `yᵢ`.
    fn in_up(&self, i: usize) -> bool {
        (self.y[i] > 0.0 && self.alpha[i] < self.c) || (self.y[i] < 0.0 && self.alpha[i] > 0.0)
    }

    fn in_low(&self, i: usize) -> bool {
        (self.y[i] > 0.0 && self.alpha[i] > 0.0) || (self.y[i] < 0.0 && self.alpha[i] < self.c)
    }

    /// Maximal violating pair `(i, j)` and the gap `−F_i − (−F_j)`.
    fn worst_pair(&self) -> Option<(usize, usize, f64)> {
        let i = (0..self.n)
            .filter(|&t| self.in_up(t))
            .max_by(|&a, &b| (-self.f[a]).total_cmp(&-self.f[b]))?;
        let j = (0..self.n)
            .filter(|&t| self.in_low(t))
            .min_by(|&a, &b| (-self.f[a]).total_cmp(&-self.f[b]))?;
        Some((i, j, self.f[j] - self.f[i]))
    }

    fn refresh_errors(&mut self) {
        for i in 0..self.n {
            let row = &self.gram[i * self.n..(i + 1) * self.n];
            self.f[i] = row
                .iter()
                .zip(&self.alpha)
                .zip(self.y)
                .map(|((&k, &a), &y)| a * y * k)
                .sum::<f64>()
                - self.y[i];
        }
    }

    /// Bias from free vectors (`b = −F_t`), else the midpoint of the
    /// feasible interval.
    fn final_bias(&self) -> f64 {
        let free: Vec<f64> = (0..self.n).filter(|&i| self.is_free(i)).map(|i| -self.f[i]).collect();
        if !free.is_empty() {
            return free.iter().sum::<f64>() / free.len() as f64;
        }
        let up = (0..self.n)
            .filter(|&t| self.in_up(t))
            .map(|t| -self.f[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let low = (0..self.n)
            .filter(|&t| self.in_low(t))
            .map(|t| -self.f[t])
            .fold(f64::INFINITY, f64::min);
        match (up.is_finite(), low.is_finite()) {
            (true, true) => 0.5 * (up + low),
            (true, false) => up,
            (false, true) => low,
            (false, false) => 0.0,
        }
    }
}

/// Dual objective `W(α)` for labels `y ∈ {−1, +1}`.
pub fn dual_objective(x: &[Vec<f64>], y: &[i8], alphas: &[f64], gamma: f64) -> f64 {
    let n = x.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alphas[i] * alphas[j] * f64::from(y[i] * y[j]) * rbf(&x[i], &x[j], gamma);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// Trains one soft-margin machine. `y` holds ±1 labels. A run that exhausts
/// `max_passes` returns its best iterate with `converged = false`.
pub fn train_binary_smo(x: &[Vec<f64>], y: &[i8], hp: &SvmHyperparams, seed: u64) -> Result<BinarySvm> {
    hp.validate()?;
    let n = x.len();
    if n != y.len() {
        return Err(Error::Shape(format!("{n} samples but {} labels", y.len())));
    }
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(Error::Data("binary labels must be +1 or -1".into()));
    }
    if !y.contains(&1) || !y.contains(&-1) {
        return Err(Error::Data("binary training needs both classes".into()));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("training rows differ in length".into()));
    }

    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        gram[i * n + i] = 1.0;
        for j in 0..i {
            let k = rbf(&x[i], &x[j], hp.gamma);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    let mut s = Solver {
        y: &yf,
        gram,
        n,
        c: hp.c,
        tol: hp.tol,
        alpha: vec![0.0; n],
        f: yf.iter().map(|v| -v).collect(),
        bias: 0.0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);

    let mut passes = 0;
    let mut hit_limit = false;
    let mut examine_all = true;
    loop {
        if passes >= hp.max_passes {
            hit_limit = true;
            break;
        }
        passes += 1;
        let mut changed = 0;
        for &i in &order {
            if (examine_all || s.is_free(i)) && s.examine(i, &mut rng) {
                changed += 1;
            }
        }
        if examine_all {
            if changed == 0 {
                break;
            }
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
    }

    s.refresh_errors();
    let polish_limit = 100_000 + 100 * n;
    for _ in 0..polish_limit {
        match s.worst_pair() {
            Some((i, j, gap)) if gap > POLISH_GAP => {
                if !s.take_step(i, j) {
                    break;
                }
            }
            _ => break,
        }
    }
    s.refresh_errors();
    let gap = s.worst_pair().map_or(0.0, |(_, _, g)| g);
    let bias = s.final_bias();

    let keep: Vec<usize> = (0..n).filter(|&i| s.alpha[i] > 0.0).collect();
    Ok(BinarySvm {
        alphas: keep.iter().map(|&i| s.alpha[i]).collect(),
        sv_labels: keep.iter().map(|&i| y[i]).collect(),
        bias,
        gamma: hp.gamma,
        support_vectors: keep.iter().map(|&i| x[i].clone()).collect(),
        converged: !hit_limit && gap <= hp.tol,
        support_indices: keep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_closed_form() {
        let x = vec![vec![-1.0], vec![1.0]];
        let m = train_binary_smo(&x, &[-1, 1], &SvmHyperparams::new(10.0, 0.3), 0).unwrap();
        let expected = 1.0 / (1.0 - (-1.2f64).exp());
        assert_eq!(m.alphas.len(), 2);
        for a in &m.alphas {
            assert!((a - expected).abs() < 1e-9, "{a} vs {expected}");
        }
        assert!(m.bias.abs() < 1e-9);
        assert!(m.decision(&[0.0]).unwrap().abs() < 1e-9);
        assert!(m.decision(&[1.0]).unwrap() > 0.0);
        assert!(m.decision(&[-1.0]).unwrap() < 0.0);
        assert!(m.converged);
    }

    #[test]
    fn contradictory_duplicates_clip_at_c() {
        let x = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let m = train_binary_smo(&x, &[1, -1], &SvmHyperparams::new(1.0, 0.3), 0).unwrap();
        assert_eq!(m.alphas, vec![1.0, 1.0]);
        assert!(m.decision(&[0.5, 0.5]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rejects_single_class_and_ragged_rows() {
        let hp = SvmHyperparams::new(1.0, 1.0);
        assert!(train_binary_smo(&[vec![0.0], vec![1.0]], &[1, 1], &hp, 0).is_err());
        assert!(train_binary_smo(&[vec![0.0], vec![1.0, 2.0]], &[1, -1], &hp, 0).is_err());
        assert!(train_binary_smo(&[vec![0.0], vec![1.0]], &[1, 0], &hp, 0).is_err());
    }

    #[test]
    fn pass_limit_sets_flag_instead_of_failing() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let y: Vec<i8> = (0..30).map(|i| if (i * 7) % 3 == 0 { 1 } else { -1 }).collect();
        let hp = SvmHyperparams {
            max_passes: 1,
            ..SvmHyperparams::new(10.0, 1.0)
        };
        let m = train_binary_smo(&x, &y, &hp, 4).unwrap();
        assert!(!m.converged);
        assert!(m.alphas.iter().all(|&a| a > 0.0 && a <= 10.0));
    }
}
