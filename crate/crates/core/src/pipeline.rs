//! End-to-end runs: extract → split → normalize → train → test, plus the
//! model file that carries everything needed to score new scenes.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::{cnn_predict, train_cnn, CnnModel};
use crate::config::{require_path, ClassifierKind, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{
    classify_scene, confusion, overall_accuracy, render_map, sweep_with, ClassPalette, ConfusionMatrix, Metrics,
    PatchClassifier, SweepCsvWriter, SweepResult,
};
use crate::nn::{mlp_predict, train_mlp, MlpModel};
use crate::raster::{
    compute_stats, exclude_bands, extract_patches, load_cube, load_labels, normalize, normalize_dataset,
    split_dataset, write_labels, BorderPolicy, LabelMap, NormalizationStats, PatchDataset, PatchSpec,
    RasterCube,
};
use crate::svm::{self, train_ovo, SvmModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "classifier", content = "params", rename_all = "lowercase")]
pub enum TrainedModel {
    Svm(SvmModel),
    Nn(MlpModel<f32>),
    Cnn(CnnModel<f32>),
}

impl TrainedModel {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedModel::Svm(_) => ClassifierKind::Svm,
            TrainedModel::Nn(_) => ClassifierKind::Nn,
            TrainedModel::Cnn(_) => ClassifierKind::Cnn,
        }
    }

    pub fn class_ids(&self) -> &[u16] {
        match self {
            TrainedModel::Svm(m) => &m.class_ids,
            TrainedModel::Nn(m) => &m.class_ids,
            TrainedModel::Cnn(m) => &m.class_ids,
        }
    }

    fn feature_length(&self) -> usize {
        match self {
            TrainedModel::Svm(m) => m.feature_length,
            TrainedModel::Nn(m) => m.input_len(),
            TrainedModel::Cnn(m) => m.input_len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TrainedModel::Svm(m) => m.validate(),
            TrainedModel::Nn(m) => m.validate(),
            TrainedModel::Cnn(m) => m.validate(),
        }
    }
}

/// A trained classifier plus the preprocessing it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub patch_size: usize,
    /// Band count of the raw input cube, before exclusion.
    pub source_bands: usize,
    pub exclude_bands: Vec<(usize, usize)>,
    /// Statistics of the training split, over the bands that survive exclusion.
    pub normalization: NormalizationStats,
    pub split_seed: u64,
    pub split_fraction: f64,
    pub model: TrainedModel,
}

impl ModelBundle {
    pub fn bands(&self) -> usize {
        self.normalization.bands()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let want = self.patch_size * self.patch_size * self.bands();
        if self.model.feature_length() != want {
            return Err(Error::Shape(format!(
                "model takes {} features, bundle geometry gives {want}",
                self.model.feature_length()
            )));
        }
        Ok(())
    }

    /// Drops excluded bands and applies the stored normalization.
    pub fn prepare_cube(&self, cube: &RasterCube) -> Result<RasterCube> {
        if cube.bands() != self.source_bands {
            return Err(Error::Shape(format!(
                "model was trained on {} bands, cube has {}",
                self.source_bands,
                cube.bands()
            )));
        }
        let cube = if self.exclude_bands.is_empty() {
            cube.clone()
        } else {
            exclude_bands(cube, &self.exclude_bands)?
        };
        normalize(&cube, &self.normalization)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: ModelBundle =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        bundle.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("model serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl PatchClassifier for ModelBundle {
    fn feature_length(&self) -> usize {
        self.model.feature_length()
    }

    fn geometry(&self) -> Option<(usize, usize)> {
        Some((self.patch_size, self.bands()))
    }

    fn predict_features(&self, features: &[f32]) -> Result<u16> {
        match &self.model {
            TrainedModel::Svm(m) => {
                let x: Vec<f64> = features.iter().map(|&v| f64::from(v)).collect();
                svm::predict(m, &x)
            }
            TrainedModel::Nn(m) => mlp_predict(m, features),
            TrainedModel::Cnn(m) => cnn_predict(m, features),
        }
    }
}

/// Normalized train/test patches for one patch size.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub train: PatchDataset,
    pub test: PatchDataset,
    pub stats: NormalizationStats,
}

/// Extracts skip-bordered patches, splits them, and scales both halves
/// with statistics of the training centers only.
pub fn prepare_split(
    cube: &RasterCube,
    labels: &LabelMap,
    patch_size: usize,
    fraction: f64,
    seed: u64,
) -> Result<PreparedSplit> {
    let ds = extract_patches(cube, labels, PatchSpec::new(patch_size, BorderPolicy::Skip)?)?;
    let (train, test) = split_dataset(&ds, fraction, seed)?;
    let stats = compute_stats(cube, &LabelMap::masked(labels, &train.source_coords))?;
    Ok(PreparedSplit {
        train: normalize_dataset(&train, &stats)?,
        test: normalize_dataset(&test, &stats)?,
        stats,
    })
}

pub fn train_classifier(kind: ClassifierKind, train: &PatchDataset, cfg: &RunConfig) -> Result<TrainedModel> {
    Ok(match kind {
        ClassifierKind::Svm => TrainedModel::Svm(train_ovo(train, &cfg.svm, cfg.seed)?),
        ClassifierKind::Nn => TrainedModel::Nn(train_mlp(train, &cfg.nn.hidden, &cfg.nn.train)?.0),
        ClassifierKind::Cnn => TrainedModel::Cnn(train_cnn(train, &cfg.cnn.arch, &cfg.cnn.train)?.0),
    })
}

pub fn evaluate_dataset(model: &dyn PatchClassifier, test: &PatchDataset) -> Result<ConfusionMatrix> {
    let predictions = test
        .patches
        .par_iter()
        .map(|p| model.predict_features(&p.values))
        .collect::<Result<Vec<u16>>>()?;
    let truth: Vec<u16> = test.patches.iter().map(|p| p.center_label).collect();
    confusion(&predictions, &truth, &test.class_ids)
}

pub fn metrics_for(
    kind: ClassifierKind,
    patch_size: usize,
    seed: u64,
    cm: ConfusionMatrix,
    train_size: usize,
    test_size: usize,
) -> Result<Metrics> {
    Ok(Metrics {
        classifier: kind.name().to_string(),
        p: patch_size,
        seed,
        overall_accuracy: overall_accuracy(&cm)?,
        confusion: cm.counts,
        class_ids: cm.class_ids,
        train_size,
        test_size,
    })
}

/// Loads the configured cube and labels and drops excluded bands.
pub fn load_inputs(cfg: &RunConfig) -> Result<(RasterCube, LabelMap, usize)> {
    let cube = load_cube(require_path(&cfg.cube, "cube")?)?;
    let labels = load_labels(require_path(&cfg.labels, "labels")?)?;
    labels.matches(&cube)?;
    let source_bands = cube.bands();
    let cube = if cfg.exclude_bands.is_empty() {
        cube
    } else {
        exclude_bands(&cube, &cfg.exclude_bands)?
    };
    Ok((cube, labels, source_bands))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub metrics: Metrics,
    pub model_path: PathBuf,
    pub metrics_path: PathBuf,
}

/// Trains `cfg.classifier` at `cfg.patch_size`, writes the model and the
/// test-split metrics.
pub fn run_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let (cube, labels, source_bands) = load_inputs(cfg)?;
    let split = prepare_split(&cube, &labels, cfg.patch_size, cfg.split_fraction, cfg.seed)?;
    let model = train_classifier(cfg.classifier, &split.train, cfg)?;
    let bundle = ModelBundle {
        patch_size: cfg.patch_size,
        source_bands,
        exclude_bands: cfg.exclude_bands.clone(),
        normalization: split.stats.clone(),
        split_seed: cfg.seed,
        split_fraction: cfg.split_fraction,
        model,
    };
    let cm = evaluate_dataset(&bundle, &split.test)?;
    let metrics = metrics_for(cfg.classifier, cfg.patch_size, cfg.seed, cm, split.train.len(), split.test.len())?;

    let dir = out_dir(cfg)?;
    let model_path = cfg.model.clone().unwrap_or_else(|| dir.join("model.json"));
    bundle.save(&model_path)?;
    let metrics_path = dir.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    Ok(TrainOutcome {
        bundle,
        metrics,
        model_path,
        metrics_path,
    })
}

/// Scores a saved model on the test half of the split it was trained
/// with, rebuilt from the stored split seed and fraction.
pub fn evaluate_model(bundle: &ModelBundle, cube: &RasterCube, labels: &LabelMap) -> Result<Metrics> {
    labels.matches(cube)?;
    let raw = bundle.prepare_cube(cube)?;
    let ds = extract_patches(&raw, labels, PatchSpec::new(bundle.patch_size, BorderPolicy::Skip)?)?;
    let (train, test) = split_dataset(&ds, bundle.split_fraction, bundle.split_seed)?;
    let cm = evaluate_dataset(bundle, &test)?;
    metrics_for(bundle.model.kind(), bundle.patch_size, bundle.split_seed, cm, train.len(), test.len())
}

pub fn run_evaluate(cfg: &RunConfig) -> Result<(Metrics, PathBuf)> {
    let bundle = ModelBundle::load(require_path(&cfg.model, "model")?)?;
    let cube = load_cube(require_path(&cfg.cube, "cube")?)?;
    let labels = load_labels(require_path(&cfg.labels, "labels")?)?;
    let metrics = evaluate_model(&bundle, &cube, &labels)?;
    let path = out_dir(cfg)?.join("evaluation.json");
    write_json(&path, &metrics)?;
    Ok((metrics, path))
}

#[derive(Debug, Clone)]
pub struct ClassifyOutcome {
    pub map: LabelMap,
    pub labels_path: PathBuf,
    pub image_path: PathBuf,
}

pub fn classify_with(bundle: &ModelBundle, cube: &RasterCube) -> Result<LabelMap> {
    let prepared = bundle.prepare_cube(cube)?;
    classify_scene(&prepared, bundle, PatchSpec::new(bundle.patch_size, BorderPolicy::Mirror)?)
}

/// Full-scene map as `classified.lbl` and `classified.ppm`.
pub fn run_classify(cfg: &RunConfig) -> Result<ClassifyOutcome> {
    let bundle = ModelBundle::load(require_path(&cfg.model, "model")?)?;
    let cube = load_cube(require_path(&cfg.cube, "cube")?)?;
    let palette = match &cfg.palette {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ClassPalette::from_csv(&text, path)?
        }
        None => ClassPalette::default_for(bundle.model.class_ids()),
    };
    let map = classify_with(&bundle, &cube)?;
    let image = render_map(&map, &palette)?;
    let dir = out_dir(cfg)?;
    let labels_path = dir.join("classified.lbl");
    let image_path = dir.join("classified.ppm");
    write_labels(&labels_path, &map)?;
    fs::write(&image_path, image).map_err(|e| Error::io(&image_path, e))?;
    Ok(ClassifyOutcome {
        map,
        labels_path,
        image_path,
    })
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub result: SweepResult,
    pub csv_path: PathBuf,
}

/// Every configured classifier at every configured patch size. Writes
/// `sweep.csv` row by row and `metrics_<classifier>_p<size>.json` per run.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    let (cube, labels, _) = load_inputs(cfg)?;
    let dir = out_dir(cfg)?;
    let csv_path = dir.join("sweep.csv");
    let mut csv = SweepCsvWriter::create(&csv_path)?;
    let result = sweep_with(&cube, &labels, cfg, &cfg.sweep_sizes(), cfg.seed, |row, metrics| {
        csv.push(row)?;
        write_json(&dir.join(format!("metrics_{}_p{}.json", row.classifier, row.patch_size)), metrics)
    })?;
    Ok(SweepOutcome { result, csv_path })
}
