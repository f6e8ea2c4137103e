use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use patchland::config::{ClassifierKind, RunConfig};
use patchland::pipeline::{run_classify, run_evaluate, run_sweep, run_train};
use patchland::synth::{generate_scene, write_scene, SceneSpec};
use patchland::{Error, Result};

#[derive(Parser)]
#[command(name = "patchland", version, about = "Patch-based land-cover classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene from a scene spec.
    Synth {
        #[command(flatten)]
        common: Common,
        /// File stem for the written cube, labels and sidecar.
        #[arg(long, default_value = "scene")]
        name: String,
    },
    /// Train one classifier and report its test-split accuracy.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunOverrides,
    },
    /// Score a saved model on the test split it was trained with.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunOverrides,
    },
    /// Classify every pixel of a scene and render the map.
    Classify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunOverrides,
        /// CSV of `class_id,r,g,b` rows.
        #[arg(long)]
        palette: Option<PathBuf>,
    },
    /// Train and test every configured classifier at every patch size.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunOverrides,
        /// Comma-separated odd patch sizes.
        #[arg(long, value_delimiter = ',')]
        patch_sizes: Option<Vec<usize>>,
        /// Comma-separated classifiers.
        #[arg(long, value_delimiter = ',')]
        classifiers: Option<Vec<String>>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config (a scene spec for `synth`, a run config otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, env = "PATCHLAND_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunOverrides {
    #[arg(long)]
    cube: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    patch_size: Option<usize>,
    /// Overrides the epoch count of both networks.
    #[arg(long)]
    epochs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, name } => {
            init_threads(common.threads)?;
            synth(&common, &name)
        }
        Command::Train { common, run } => {
            init_threads(common.threads)?;
            let cfg = run_config(&common, &run)?;
            let out = run_train(&cfg)?;
            println!(
                "{} p={} accuracy {:.2}% (train {}, test {})",
                out.metrics.classifier,
                out.metrics.p,
                out.metrics.overall_accuracy,
                out.metrics.train_size,
                out.metrics.test_size
            );
            println!("model: {}", out.model_path.display());
            println!("metrics: {}", out.metrics_path.display());
            Ok(())
        }
        Command::Evaluate { common, run } => {
            init_threads(common.threads)?;
            let cfg = run_config(&common, &run)?;
            let (metrics, path) = run_evaluate(&cfg)?;
            println!(
                "{} p={} accuracy {:.2}% on {} test samples",
                metrics.classifier, metrics.p, metrics.overall_accuracy, metrics.test_size
            );
            println!("metrics: {}", path.display());
            Ok(())
        }
        Command::Classify { common, run, palette } => {
            init_threads(common.threads)?;
            let mut cfg = run_config(&common, &run)?;
            if palette.is_some() {
                cfg.palette = palette;
            }
            let out = run_classify(&cfg)?;
            println!("map: {}", out.labels_path.display());
            println!("image: {}", out.image_path.display());
            Ok(())
        }
        Command::Sweep {
            common,
            run,
            patch_sizes,
            classifiers,
        } => {
            init_threads(common.threads)?;
            let mut cfg = run_config(&common, &run)?;
            if let Some(sizes) = patch_sizes {
                cfg.patch_sizes = sizes;
            }
            if let Some(names) = classifiers {
                cfg.classifiers = names.iter().map(|n| n.parse()).collect::<Result<_>>()?;
            }
            cfg.validate()?;
            let out = run_sweep(&cfg)?;
            for row in &out.result.rows {
                println!("{:>4} p={:<3} {:6.2}%", row.classifier, row.patch_size, row.accuracy_pct);
            }
            for (clf, spread) in out.result.spread() {
                println!("{clf} spread over patch sizes: {spread:.2} points");
            }
            println!("csv: {}", out.csv_path.display());
            Ok(())
        }
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run_config(common: &Common, run: &RunOverrides) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = [
        (&run.cube, &mut cfg.cube),
        (&run.labels, &mut cfg.labels),
        (&run.model, &mut cfg.model),
        (&common.out, &mut cfg.out_dir),
    ];
    for (flag, field) in overrides {
        if flag.is_some() {
            *field = flag.clone();
        }
    }
    if let Some(c) = &run.classifier {
        cfg.classifier = c.parse::<ClassifierKind>()?;
    }
    if let Some(p) = run.patch_size {
        cfg.patch_size = p;
    }
    if let Some(e) = run.epochs {
        cfg.nn.train.epochs = e;
        cfg.cnn.train.epochs = e;
    }
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth(common: &Common, name: &str) -> Result<()> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("synth needs --config with a scene spec".into()))?;
    let mut spec = load_spec(path)?;
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let scene = generate_scene(&spec)?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let files = write_scene(&scene, &dir, name)?;
    println!(
        "{}x{}x{} scene, {} fields over {} classes, {} spectra swapped",
        spec.rows,
        spec.cols,
        spec.bands,
        scene.fields.len(),
        spec.class_count,
        scene.swapped.iter().filter(|&&s| s).count()
    );
    for f in &scene.fields {
        println!(
            "  class {:>3} at ({}, {}) {}x{}",
            f.class, f.row, f.col, f.height, f.width
        );
    }
    println!("cube: {}", files.cube.display());
    println!("labels: {}", files.labels.display());
    println!("spec: {}", files.sidecar.display());
    Ok(())
}

fn load_spec(path: &Path) -> Result<SceneSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
