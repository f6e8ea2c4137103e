//! Seeded synthetic scenes: rectangular fields of known class on an
//! unlabeled background, with Gaussian spectral noise and a fraction of
//! labeled pixels carrying another class's spectrum.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{write_cube, write_labels, LabelMap, RasterCube};

const PLACEMENT_TRIES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub class_count: usize,
    pub field_count: usize,
    /// `class_count × bands` mean spectra; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_means: Option<Vec<Vec<f64>>>,
    /// Spectrum of unlabeled ground; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<Vec<f64>>,
    pub noise_sigma: f64,
    pub salt_pepper_rate: f64,
    /// Inclusive `(min, max)` field side; derived from the scene size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_size: Option<(usize, usize)>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
    pub class: u16,
}

impl Field {
    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub cube: RasterCube,
    pub labels: LabelMap,
    pub fields: Vec<Field>,
    /// Labeled pixels whose spectrum came from another class.
    pub swapped: Vec<bool>,
    /// The spec with every optional field resolved.
    pub spec: SceneSpec,
}

impl SceneSpec {
    /// Spec with seeded uniform `[0.1, 0.9]` class means.
    #[allow(clippy::too_many_arguments)]
    pub fn random(
        rows: usize,
        cols: usize,
        bands: usize,
        class_count: usize,
        field_count: usize,
        noise_sigma: f64,
        salt_pepper_rate: f64,
        seed: u64,
    ) -> Self {
        Self {
            rows,
            cols,
            bands,
            class_count,
            field_count,
            class_means: None,
            background: None,
            noise_sigma,
            salt_pepper_rate,
            field_size: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rows == 0 || self.cols == 0 || self.bands == 0 {
            return bad("scene dimensions must be positive".into());
        }
        if self.class_count < 1 || self.class_count > u16::MAX as usize {
            return bad(format!("class_count {} out of range", self.class_count));
        }
        if self.field_count < self.class_count {
            return bad(format!(
                "field_count {} must be at least class_count {}",
                self.field_count, self.class_count
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be finite and >= 0", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.salt_pepper_rate) {
            return bad(format!("salt_pepper_rate {} must lie in [0, 1)", self.salt_pepper_rate));
        }
        if let Some(means) = &self.class_means {
            if means.len() != self.class_count || means.iter().any(|m| m.len() != self.bands) {
                return bad("class_means must be class_count rows of bands values".into());
            }
        }
        if let Some(bg) = &self.background {
            if bg.len() != self.bands {
                return bad("background must have one value per band".into());
            }
        }
        if let Some((lo, hi)) = self.field_size {
            if lo == 0 || lo > hi || hi > self.rows.min(self.cols) {
                return bad(format!("field_size ({lo}, {hi}) does not fit the scene"));
            }
        }
        Ok(())
    }

    fn default_field_size(&self) -> (usize, usize) {
        let side = self.rows.min(self.cols);
        let lo = (side / 8).max(2).min(side);
        let hi = (side / 4).max(lo);
        (lo, hi)
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut resolved = spec.clone();
    let class_means = match &spec.class_means {
        Some(m) => m.clone(),
        None => (0..spec.class_count)
            .map(|_| (0..spec.bands).map(|_| rng.random_range(0.1..0.9)).collect())
            .collect(),
    };
    let background = match &spec.background {
        Some(b) => b.clone(),
        None => (0..spec.bands).map(|_| rng.random_range(0.1..0.9)).collect(),
    };
    let (min_side, max_side) = spec.field_size.unwrap_or_else(|| spec.default_field_size());
    resolved.class_means = Some(class_means.clone());
    resolved.background = Some(background.clone());
    resolved.field_size = Some((min_side, max_side));

    let (rows, cols) = (spec.rows, spec.cols);
    let mut labels = vec![0u16; rows * cols];
    let mut fields = Vec::with_capacity(spec.field_count);
    for f in 0..spec.field_count {
        let class = if f < spec.class_count {
            f as u16 + 1
        } else {
            rng.random_range(1..=spec.class_count as u16)
        };
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let height = rng.random_range(min_side..=max_side).min(rows);
            let width = rng.random_range(min_side..=max_side).min(cols);
            let row = rng.random_range(0..=rows - height);
            let col = rng.random_range(0..=cols - width);
            let free = (row..row + height)
                .all(|r| labels[r * cols + col..r * cols + col + width].iter().all(|&l| l == 0));
            if free {
                placed = Some(Field {
                    row,
                    col,
                    height,
                    width,
                    class,
                });
                break;
            }
        }
        let field = placed.ok_or_else(|| {
            Error::Data(format!(
                "could not place field {} of {} without overlap after {PLACEMENT_TRIES} tries",
                f + 1,
                spec.field_count
            ))
        })?;
        for r in field.row..field.row + field.height {
            labels[r * cols + field.col..r * cols + field.col + field.width].fill(class);
        }
        fields.push(field);
    }

    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::Config(format!("noise_sigma: {e}")))?;
    let mut values = Vec::with_capacity(rows * cols * spec.bands);
    let mut swapped = vec![false; rows * cols];
    for (i, &label) in labels.iter().enumerate() {
        let mean = if label == 0 {
            &background
        } else {
            let own = label as usize - 1;
            let mut source = own;
            if spec.class_count > 1 && rng.random_bool(spec.salt_pepper_rate) {
                let other = rng.random_range(0..spec.class_count - 1);
                source = if other >= own { other + 1 } else { other };
                swapped[i] = true;
            }
            &class_means[source]
        };
        values.extend(mean.iter().map(|&m| (m + noise.sample(&mut rng)) as f32));
    }

    Ok(Scene {
        cube: RasterCube::new(rows, cols, spec.bands, values)?,
        labels: LabelMap::new(rows, cols, labels)?,
        fields,
        swapped,
        spec: resolved,
    })
}

/// Paths written by [`write_scene`].
#[derive(Debug, Clone)]
pub struct SceneFiles {
    pub cube: PathBuf,
    pub labels: PathBuf,
    pub sidecar: PathBuf,
}

/// Writes `<stem>.cube`, `<stem>.lbl` and the resolved spec as `<stem>.json`.
pub fn write_scene(scene: &Scene, dir: &Path, stem: &str) -> Result<SceneFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SceneFiles {
        cube: dir.join(format!("{stem}.cube")),
        labels: dir.join(format!("{stem}.lbl")),
        sidecar: dir.join(format!("{stem}.json")),
    };
    write_cube(&files.cube, &scene.cube)?;
    write_labels(&files.labels, &scene.labels)?;
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "spec": scene.spec,
        "fields": scene.fields,
    }))
    .expect("scene spec serializes");
    fs::write(&files.sidecar, json).map_err(|e| Error::io(&files.sidecar, e))?;
    Ok(files)
}
