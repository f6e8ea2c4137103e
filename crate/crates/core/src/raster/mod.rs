//! Raster cubes, ground-reference label maps and patch datasets.
//!
//! Everything is stored row-major as `[row][col][band]`. Label value 0 marks
//! pixels without ground reference.

mod io;
mod patches;

pub use io::{
    decode_cube, decode_labels, encode_cube, encode_labels, load_cube, load_labels, write_cube,
    write_labels,
};
pub(crate) use patches::copy_window;
pub use patches::{
    extract_patches, flatten_patch, normalize_dataset, reflect_index, split_dataset, unflatten,
    BorderPolicy, Patch, PatchDataset, PatchSpec,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RasterCube {
    rows: usize,
    cols: usize,
    bands: usize,
    values: Vec<f32>,
}

impl RasterCube {
    pub fn new(rows: usize, cols: usize, bands: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::Shape(format!(
                "cube dimensions must be positive, got {rows}x{cols}x{bands}"
            )));
        }
        if values.len() != rows * cols * bands {
            return Err(Error::Shape(format!(
                "cube {rows}x{cols}x{bands} needs {} values, got {}",
                rows * cols * bands,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite cube value at flat index {i}")));
        }
        Ok(Self {
            rows,
            cols,
            bands,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize, band: usize) -> f32 {
        self.values[(row * self.cols + col) * self.bands + band]
    }

    /// All bands of one pixel.
    pub fn spectrum(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.cols + col) * self.bands;
        &self.values[start..start + self.bands]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    rows: usize,
    cols: usize,
    labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(rows: usize, cols: usize, labels: Vec<u16>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "label map dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if labels.len() != rows * cols {
            return Err(Error::Shape(format!(
                "label map {rows}x{cols} needs {} labels, got {}",
                rows * cols,
                labels.len()
            )));
        }
        Ok(Self { rows, cols, labels })
    }

    /// Map that is zero everywhere except at `coords`, which keep their label
    /// from `source`.
    pub fn masked(source: &LabelMap, coords: &[(usize, usize)]) -> Self {
        let mut labels = vec![0; source.labels.len()];
        for &(r, c) in coords {
            labels[r * source.cols + c] = source.get(r, c);
        }
        Self {
            rows: source.rows,
            cols: source.cols,
            labels,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.cols + col]
    }

    /// Sorted distinct non-zero labels.
    pub fn class_ids(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn matches(&self, cube: &RasterCube) -> Result<()> {
        if self.rows != cube.rows || self.cols != cube.cols {
            return Err(Error::Shape(format!(
                "label map is {}x{} but cube is {}x{}",
                self.rows, self.cols, cube.rows, cube.cols
            )));
        }
        Ok(())
    }
}

/// Per-band minimum and maximum over the labeled population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Vec<f32>,
    pub max: Vec<f32>,
}

impl NormalizationStats {
    pub fn bands(&self) -> usize {
        self.min.len()
    }

    pub fn is_constant(&self, band: usize) -> bool {
        self.max[band] == self.min[band]
    }

    pub fn apply(&self, band: usize, v: f32) -> f32 {
        let (lo, hi) = (self.min[band], self.max[band]);
        if hi == lo {
            return 0.0;
        }
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

/// Removes 1-based inclusive band ranges, keeping the surviving bands in order.
pub fn exclude_bands(cube: &RasterCube, drop: &[(usize, usize)]) -> Result<RasterCube> {
    let mut dropped = vec![false; cube.bands];
    for &(lo, hi) in drop {
        if lo == 0 || lo > hi || hi > cube.bands {
            return Err(Error::Config(format!(
                "band range {lo}-{hi} outside 1-{}",
                cube.bands
            )));
        }
        for flag in &mut dropped[lo - 1..hi] {
            if *flag {
                return Err(Error::Config(format!("band range {lo}-{hi} overlaps another range")));
            }
            *flag = true;
        }
    }
    let keep: Vec<usize> = (0..cube.bands).filter(|&b| !dropped[b]).collect();
    if keep.is_empty() {
        return Err(Error::Config("every band was excluded".into()));
    }
    let mut values = Vec::with_capacity(cube.rows * cube.cols * keep.len());
    for px in cube.values.chunks_exact(cube.bands) {
        values.extend(keep.iter().map(|&b| px[b]));
    }
    RasterCube::new(cube.rows, cube.cols, keep.len(), values)
}

pub fn compute_stats(cube: &RasterCube, labels: &LabelMap) -> Result<NormalizationStats> {
    labels.matches(cube)?;
    let mut min = vec![f32::INFINITY; cube.bands];
    let mut max = vec![f32::NEG_INFINITY; cube.bands];
    let mut any = false;
    for (px, &l) in cube.values.chunks_exact(cube.bands).zip(&labels.labels) {
        if l == 0 {
            continue;
        }
        any = true;
        for (b, &v) in px.iter().enumerate() {
            min[b] = min[b].min(v);
            max[b] = max[b].max(v);
        }
    }
    if !any {
        return Err(Error::Data("no labeled pixels to compute band statistics".into()));
    }
    Ok(NormalizationStats { min, max })
}

/// Min-max scales each band into `[0, 1]`, clamping values outside the
/// statistics' range. Constant bands become 0.
pub fn normalize(cube: &RasterCube, stats: &NormalizationStats) -> Result<RasterCube> {
    if stats.bands() != cube.bands {
        return Err(Error::Shape(format!(
            "statistics cover {} bands, cube has {}",
            stats.bands(),
            cube.bands
        )));
    }
    let values = cube
        .values
        .chunks_exact(cube.bands)
        .flat_map(|px| px.iter().enumerate().map(|(b, &v)| stats.apply(b, v)))
        .collect();
    Ok(RasterCube {
        rows: cube.rows,
        cols: cube.cols,
        bands: cube.bands,
        values,
    })
}
