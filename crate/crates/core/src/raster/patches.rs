use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LabelMap, NormalizationStats, RasterCube};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BorderPolicy {
    /// Centers whose window leaves the image are dropped.
    #[default]
    Skip,
    /// Out-of-image window positions are reflected back inside.
    Mirror,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub size: usize,
    #[serde(default)]
    pub border: BorderPolicy,
}

impl PatchSpec {
    pub fn new(size: usize, border: BorderPolicy) -> Result<Self> {
        let spec = Self { size, border };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "patch size must be a positive odd number, got {}",
                self.size
            )));
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub bands: usize,
    /// `[row][col][band]`, length `size² · bands`.
    pub values: Vec<f32>,
    pub center_label: u16,
}

impl Patch {
    pub fn center(&self) -> &[f32] {
        let r = self.size / 2;
        let start = (r * self.size + r) * self.bands;
        &self.values[start..start + self.bands]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    pub patches: Vec<Patch>,
    pub class_ids: Vec<u16>,
    pub source_coords: Vec<(usize, usize)>,
    pub size: usize,
    pub bands: usize,
}

impl PatchDataset {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_ids.len()
    }

    pub fn feature_length(&self) -> usize {
        self.size * self.size * self.bands
    }

    /// Index of `label` in `class_ids`.
    pub fn class_index(&self, label: u16) -> Option<usize> {
        self.class_ids.binary_search(&label).ok()
    }

    /// Center labels mapped to `0..K`.
    pub fn class_indices(&self) -> Vec<usize> {
        self.patches
            .iter()
            .map(|p| self.class_index(p.center_label).expect("label outside class_ids"))
            .collect()
    }

    fn subset(&self, idx: &[usize]) -> PatchDataset {
        PatchDataset {
            patches: idx.iter().map(|&i| self.patches[i].clone()).collect(),
            class_ids: self.class_ids.clone(),
            source_coords: idx.iter().map(|&i| self.source_coords[i]).collect(),
            size: self.size,
            bands: self.bands,
        }
    }
}

/// Reflects `i` (relative to a dimension of length `n`) back into `0..n`
/// without repeating the edge sample: -1 → 1, n → n-2.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Copies the `size × size` window centered at `(row, col)` into `out`,
/// mirroring coordinates that fall outside the image.
pub(crate) fn copy_window(cube: &RasterCube, row: usize, col: usize, size: usize, out: &mut Vec<f32>) {
    let r = (size / 2) as isize;
    out.clear();
    for dy in -r..=r {
        let y = reflect_index(row as isize + dy, cube.rows());
        for dx in -r..=r {
            let x = reflect_index(col as isize + dx, cube.cols());
            out.extend_from_slice(cube.spectrum(y, x));
        }
    }
}

/// One patch per labeled pixel, in row-major order of the centers.
pub fn extract_patches(cube: &RasterCube, labels: &LabelMap, spec: PatchSpec) -> Result<PatchDataset> {
    spec.validate()?;
    labels.matches(cube)?;
    let r = spec.radius();
    let (rows, cols) = (cube.rows(), cube.cols());
    let inside = |row: usize, col: usize| {
        row >= r && col >= r && row + r < rows && col + r < cols
    };

    let per_row: Vec<Vec<(Patch, (usize, usize))>> = (0..rows)
        .into_par_iter()
        .map(|row| {
            let mut out = Vec::new();
            for col in 0..cols {
                let label = labels.get(row, col);
                if label == 0 {
                    continue;
                }
                if spec.border == BorderPolicy::Skip && !inside(row, col) {
                    continue;
                }
                let mut values = Vec::with_capacity(spec.size * spec.size * cube.bands());
                copy_window(cube, row, col, spec.size, &mut values);
                out.push((
                    Patch {
                        size: spec.size,
                        bands: cube.bands(),
                        values,
                        center_label: label,
                    },
                    (row, col),
                ));
            }
            out
        })
        .collect();

    let (patches, source_coords): (Vec<_>, Vec<_>) = per_row.into_iter().flatten().unzip();
    if patches.is_empty() {
        return Err(Error::Data(format!(
            "no labeled pixel admits a {0}x{0} patch",
            spec.size
        )));
    }
    let mut class_ids: Vec<u16> = patches.iter().map(|p: &Patch| p.center_label).collect();
    class_ids.sort_unstable();
    class_ids.dedup();
    Ok(PatchDataset {
        patches,
        class_ids,
        source_coords,
        size: spec.size,
        bands: cube.bands(),
    })
}

/// `[row][col][band]` traversal; the patch storage already uses that order.
pub fn flatten_patch(patch: &Patch) -> Vec<f32> {
    patch.values.clone()
}

pub fn unflatten(features: &[f32], size: usize, bands: usize, center_label: u16) -> Result<Patch> {
    if features.len() != size * size * bands {
        return Err(Error::Shape(format!(
            "{} features cannot form a {size}x{size}x{bands} patch",
            features.len()
        )));
    }
    Ok(Patch {
        size,
        bands,
        values: features.to_vec(),
        center_label,
    })
}

pub fn normalize_dataset(ds: &PatchDataset, stats: &NormalizationStats) -> Result<PatchDataset> {
    if stats.bands() != ds.bands {
        return Err(Error::Shape(format!(
            "statistics cover {} bands, patches have {}",
            stats.bands(),
            ds.bands
        )));
    }
    let mut out = ds.clone();
    for patch in &mut out.patches {
        for px in patch.values.chunks_exact_mut(ds.bands) {
            for (b, v) in px.iter_mut().enumerate() {
                *v = stats.apply(b, *v);
            }
        }
    }
    Ok(out)
}

/// Stratified split: per class, `max(1, floor(fraction · n_c))` randomly
/// chosen samples go to train and the rest to test. Both halves keep the
/// original dataset order.
pub fn split_dataset(
    ds: &PatchDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(PatchDataset, PatchDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, p) in ds.patches.iter().enumerate() {
        let k = ds
            .class_index(p.center_label)
            .ok_or_else(|| Error::Data(format!("label {} not in class list", p.center_label)))?;
        by_class[k].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_train = vec![false; ds.len()];
    for (k, members) in by_class.iter_mut().enumerate() {
        let n = members.len();
        if n < 2 {
            return Err(Error::Data(format!(
                "class {} has {n} sample(s); at least 2 are needed to split",
                ds.class_ids[k]
            )));
        }
        members.shuffle(&mut rng);
        let n_train = ((train_fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
        for &i in &members[..n_train] {
            is_train[i] = true;
        }
    }
    let (train, test): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| is_train[i]);
    Ok((ds.subset(&train), ds.subset(&test)))
}
