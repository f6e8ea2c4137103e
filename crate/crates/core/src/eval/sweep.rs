use std::fs::File;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Metrics;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pipeline::{evaluate_dataset, metrics_for, prepare_split, train_classifier};
use crate::raster::{LabelMap, RasterCube};

/// One `(classifier, patch size)` run. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub classifier: String,
    pub patch_size: usize,
    pub accuracy_pct: f64,
    pub train_n: usize,
    pub test_n: usize,
    pub seed: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).expect("in-memory CSV write");
        }
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER).expect("in-memory CSV write");
        }
        w.into_inner().expect("in-memory CSV flush")
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers().map_err(|e| Error::Data(format!("sweep CSV: {e}")))?;
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::Data(format!("unexpected sweep CSV header {header:?}")));
        }
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<SweepRow>, _>>()
            .map_err(|e| Error::Data(format!("sweep CSV: {e}")))?;
        Ok(Self { rows })
    }

    /// Max minus min accuracy over patch sizes, per classifier, in first-seen order.
    pub fn spread(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64, f64)> = Vec::new();
        for row in &self.rows {
            match out.iter_mut().find(|(c, _, _)| *c == row.classifier) {
                Some((_, lo, hi)) => {
                    *lo = lo.min(row.accuracy_pct);
                    *hi = hi.max(row.accuracy_pct);
                }
                None => out.push((row.classifier.clone(), row.accuracy_pct, row.accuracy_pct)),
            }
        }
        out.into_iter().map(|(c, lo, hi)| (c, hi - lo)).collect()
    }
}

pub const CSV_HEADER: [&str; 7] = [
    "classifier",
    "patch_size",
    "accuracy_pct",
    "train_n",
    "test_n",
    "seed",
    "seconds",
];

/// Streams rows to a CSV file, flushing after each so an aborted sweep
/// keeps what it finished.
pub struct SweepCsvWriter {
    inner: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl SweepCsvWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(CSV_HEADER).map_err(|e| csv_io(path, e))?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
        })
    }

    pub fn push(&mut self, row: &SweepRow) -> Result<()> {
        let w = &mut self.inner;
        w.write_record([
            row.classifier.clone(),
            row.patch_size.to_string(),
            row.accuracy_pct.to_string(),
            row.train_n.to_string(),
            row.test_n.to_string(),
            row.seed.to_string(),
            row.seconds.to_string(),
        ])
        .map_err(|e| csv_io(&self.path, e))?;
        w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// For every patch size, one split shared by all classifiers, then
/// train and test each classifier on it.
pub fn sweep_patch_sizes(
    cube: &RasterCube,
    labels: &LabelMap,
    cfg: &RunConfig,
    patch_sizes: &[usize],
    seed: u64,
) -> Result<SweepResult> {
    sweep_with(cube, labels, cfg, patch_sizes, seed, |_, _| Ok(()))
}

/// [`sweep_patch_sizes`] with a callback after each finished run.
pub fn sweep_with(
    cube: &RasterCube,
    labels: &LabelMap,
    cfg: &RunConfig,
    patch_sizes: &[usize],
    seed: u64,
    mut on_row: impl FnMut(&SweepRow, &Metrics) -> Result<()>,
) -> Result<SweepResult> {
    let mut cfg = cfg.clone();
    cfg.set_seed(seed);
    let mut rows = Vec::new();
    for &p in patch_sizes {
        let split = prepare_split(cube, labels, p, cfg.split_fraction, seed)?;
        for kind in cfg.sweep_classifiers() {
            let start = Instant::now();
            let model = crate::pipeline::ModelBundle {
                patch_size: p,
                source_bands: cube.bands(),
                exclude_bands: Vec::new(),
                normalization: split.stats.clone(),
                split_seed: seed,
                split_fraction: cfg.split_fraction,
                model: train_classifier(kind, &split.train, &cfg)?,
            };
            let cm = evaluate_dataset(&model, &split.test)?;
            let metrics = metrics_for(kind, p, seed, cm, split.train.len(), split.test.len())?;
            let row = SweepRow {
                classifier: kind.name().to_string(),
                patch_size: p,
                accuracy_pct: metrics.overall_accuracy,
                train_n: metrics.train_size,
                test_n: metrics.test_size,
                seed,
                seconds: start.elapsed().as_secs_f64(),
            };
            on_row(&row, &metrics)?;
            rows.push(row);
        }
    }
    Ok(SweepResult { rows })
}
