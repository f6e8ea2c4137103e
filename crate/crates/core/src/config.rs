//! JSON run configuration and the published parameter sets.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cnn::CnnArch;
use crate::error::{Error, Result};
use crate::raster::PatchSpec;
use crate::svm::SvmHyperparams;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Svm,
    Nn,
    Cnn,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Svm, ClassifierKind::Nn, ClassifierKind::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Nn => "nn",
            ClassifierKind::Cnn => "cnn",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(ClassifierKind::Svm),
            "nn" => Ok(ClassifierKind::Nn),
            "cnn" => Ok(ClassifierKind::Cnn),
            other => Err(Error::Config(format!("unknown classifier '{other}' (svm, nn, cnn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnConfig {
    pub hidden: Vec<usize>,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![500, 350, 150],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    #[serde(flatten)]
    pub arch: CnnArch,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            arch: CnnArch::new(&[500, 100], &[200, 84]),
            train: TrainConfig::default(),
        }
    }
}

/// Everything one command needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub cube: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub palette: Option<PathBuf>,
    pub classifier: ClassifierKind,
    /// Classifiers for `sweep`; empty means just `classifier`.
    pub classifiers: Vec<ClassifierKind>,
    pub patch_size: usize,
    /// Patch sizes for `sweep`; empty means just `patch_size`.
    pub patch_sizes: Vec<usize>,
    pub split_fraction: f64,
    pub seed: u64,
    /// 1-based inclusive band ranges dropped before anything else.
    pub exclude_bands: Vec<(usize, usize)>,
    pub svm: SvmHyperparams,
    pub nn: NnConfig,
    pub cnn: CnnConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cube: None,
            labels: None,
            model: None,
            out_dir: None,
            palette: None,
            classifier: ClassifierKind::Svm,
            classifiers: Vec::new(),
            patch_size: 5,
            patch_sizes: Vec::new(),
            split_fraction: 0.75,
            seed: 0,
            exclude_bands: Vec::new(),
            svm: SvmHyperparams::new(10.0, 0.3),
            nn: NnConfig::default(),
            cnn: CnnConfig::default(),
        }
    }
}

impl RunConfig {
    /// Landsat ETM+ parameter set.
    pub fn etm_plus() -> Self {
        Self::default()
    }

    /// AVIRIS-NG parameter set, including the striped-band removal that
    /// takes 425 bands down to 372.
    pub fn aviris_ng() -> Self {
        Self {
            exclude_bands: vec![(1, 5), (196, 207), (285, 320)],
            svm: SvmHyperparams::new(30.0, 3.0),
            cnn: CnnConfig {
                arch: CnnArch::new(&[300, 200], &[200, 84]),
                train: TrainConfig::default(),
            },
            ..Self::default()
        }
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        let seed = cfg.seed;
        cfg.set_seed(seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.cube,
            &mut self.labels,
            &mut self.model,
            &mut self.out_dir,
            &mut self.palette,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split_fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        for &p in self.sweep_sizes().iter().chain([&self.patch_size]) {
            PatchSpec::new(p, Default::default())?;
        }
        self.svm.validate()?;
        self.nn.train.validate()?;
        if self.nn.hidden.contains(&0) {
            return Err(Error::Config("NN hidden widths must be positive".into()));
        }
        self.cnn.arch.validate()?;
        self.cnn.train.validate()
    }

    pub fn sweep_sizes(&self) -> Vec<usize> {
        if self.patch_sizes.is_empty() {
            vec![self.patch_size]
        } else {
            self.patch_sizes.clone()
        }
    }

    pub fn sweep_classifiers(&self) -> Vec<ClassifierKind> {
        if self.classifiers.is_empty() {
            vec![self.classifier]
        } else {
            self.classifiers.clone()
        }
    }

    /// Overrides every seed, including the network initialization seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.nn.train.seed = seed;
        self.cnn.train.seed = seed;
    }

}

/// The path in `field`, or a config error naming what is missing.
pub fn require_path<'a>(field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    field
        .as_deref()
        .ok_or_else(|| Error::Config(format!("no {name} path given")))
}
