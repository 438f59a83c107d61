//! Subcommand implementations.
//!
//! Each function takes its parsed flags, does the work through the library
//! crate, and reports through stdout plus the exit-code buckets in
//! [`CliError`]. Paths are recorded in manifests exactly as given on the
//! command line, so runs launched with relative paths from different
//! directories produce byte-identical manifests.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;

use mambaseg::bench::{bench_forward, rows_to_csv, SequenceCore};
use mambaseg::data::{
    atomic_write, load_scene, render_class_map, save_scene, split_per_class, synth_scene,
    HsiScene, Palette,
};
use mambaseg::metrics::{evaluate, MetricsReport};
use mambaseg::model::{
    load_checkpoint, predict_classes, save_checkpoint, train as train_model, EncoderVariant,
    EpochRecord, Model, ModelConfig,
};
use mambaseg::ssm::ScanMode;
use mambaseg::tensor::no_grad;

use crate::CliError;

/// Scan evaluation order, exposed on every command that runs the network.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScanArg {
    Sequential,
    ParallelPrefix,
}

impl From<ScanArg> for ScanMode {
    fn from(arg: ScanArg) -> ScanMode {
        match arg {
            ScanArg::Sequential => ScanMode::Sequential,
            ScanArg::ParallelPrefix => ScanMode::ParallelPrefix,
        }
    }
}

/// Which split mask a scoring run reads.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MaskArg {
    Train,
    Val,
    Test,
}

impl MaskArg {
    fn select(self, scene: &HsiScene) -> &[bool] {
        match self {
            MaskArg::Train => &scene.train_mask,
            MaskArg::Val => &scene.val_mask,
            MaskArg::Test => &scene.test_mask,
        }
    }

    fn name(self) -> &'static str {
        match self {
            MaskArg::Train => "train",
            MaskArg::Val => "val",
            MaskArg::Test => "test",
        }
    }
}

// ── synth ───────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct SynthArgs {
    /// Scene height in pixels
    #[arg(long)]
    h: usize,
    /// Scene width in pixels
    #[arg(long)]
    w: usize,
    /// Spectral bands
    #[arg(long)]
    c: usize,
    /// Classes
    #[arg(long)]
    k: usize,
    /// Per-band noise level
    #[arg(long, default_value_t = 0.05)]
    sigma: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output scene file
    #[arg(long)]
    out: PathBuf,
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let scene = synth_scene(args.h, args.w, args.c, args.k, args.sigma, args.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    save_scene(&scene, &args.out)?;
    println!(
        "wrote {} ({}x{}x{} bands, {} classes, {} labeled pixels)",
        args.out.display(),
        scene.height,
        scene.width,
        scene.channels,
        scene.class_count,
        scene.labeled_count()
    );
    Ok(())
}

// ── import ──────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct ImportArgs {
    /// Raw little-endian float32 cube, band varying fastest
    #[arg(long)]
    cube: PathBuf,
    /// Raw little-endian u16 label raster, 0 = unlabeled
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    channels: usize,
    /// Class count; defaults to the largest label present
    #[arg(long)]
    classes: Option<usize>,
    /// Output scene file
    #[arg(long)]
    out: PathBuf,
}

fn read_raw(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn import(args: ImportArgs) -> Result<(), CliError> {
    let pixels = args.height * args.width;

    let cube_bytes = read_raw(&args.cube)?;
    let want = pixels * args.channels * 4;
    if cube_bytes.len() != want {
        return Err(CliError::Data(format!(
            "{}: holds {} bytes, {}x{}x{} float32 needs {want}",
            args.cube.display(),
            cube_bytes.len(),
            args.height,
            args.width,
            args.channels
        )));
    }
    let cube: Vec<f32> = cube_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let label_bytes = read_raw(&args.labels)?;
    if label_bytes.len() != pixels * 2 {
        return Err(CliError::Data(format!(
            "{}: holds {} bytes, {}x{} u16 needs {}",
            args.labels.display(),
            label_bytes.len(),
            args.height,
            args.width,
            pixels * 2
        )));
    }
    let labels: Vec<u16> = label_bytes
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let seen = labels.iter().copied().max().unwrap_or(0) as usize;
    if seen == 0 {
        return Err(CliError::Data(format!(
            "{}: every pixel is unlabeled",
            args.labels.display()
        )));
    }
    let class_count = match args.classes {
        Some(k) if k < seen => {
            return Err(CliError::Data(format!(
                "label raster contains class {seen} but --classes says {k}"
            )))
        }
        Some(k) => k,
        None => seen,
    };

    let scene = HsiScene {
        height: args.height,
        width: args.width,
        channels: args.channels,
        class_count,
        cube,
        labels,
        train_mask: vec![false; pixels],
        val_mask: vec![false; pixels],
        test_mask: vec![false; pixels],
    };
    scene.validate()?;
    save_scene(&scene, &args.out)?;
    println!(
        "wrote {} ({} classes, {} labeled pixels)",
        args.out.display(),
        class_count,
        scene.labeled_count()
    );
    Ok(())
}

// ── split ───────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct SplitArgs {
    /// Scene to draw masks for
    #[arg(long)]
    scene: PathBuf,
    /// Training pixels per class
    #[arg(long, default_value_t = 30)]
    n_train: usize,
    /// Validation pixels per class
    #[arg(long, default_value_t = 10)]
    n_val: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output scene file; defaults to rewriting the input
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn split(args: SplitArgs) -> Result<(), CliError> {
    let mut scene = load_scene(&args.scene)?;
    let (train, val, test) = split_per_class(&scene.labels, args.n_train, args.n_val, args.seed)?;
    scene.train_mask = train;
    scene.val_mask = val;
    scene.test_mask = test;
    let out = args.out.unwrap_or(args.scene);
    save_scene(&scene, &out)?;
    let (n_train, n_val, n_test) = scene.split_counts();
    println!("wrote {} (train {n_train}, val {n_val}, test {n_test})", out.display());
    Ok(())
}

// ── train ───────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct TrainArgs {
    /// Scene with split masks
    #[arg(long)]
    scene: PathBuf,
    /// Checkpoint to write
    #[arg(long)]
    checkpoint: PathBuf,
    /// Manifest to write; defaults to `<checkpoint>.manifest.json`
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    spectral_groups: Option<usize>,
    #[arg(long)]
    encoder_depth: Option<usize>,
    #[arg(long)]
    state_size: Option<usize>,
    #[arg(long)]
    expand: Option<usize>,
    #[arg(long)]
    conv_width: Option<usize>,
    /// Step-projection rank; 0 picks a width-based default
    #[arg(long)]
    dt_rank: Option<usize>,
    #[arg(long)]
    gn_groups: Option<usize>,
    /// Encoder layout: full|spatial-only|spectral-only|sum
    #[arg(long)]
    variant: Option<EncoderVariant>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = ScanArg::Sequential)]
    scan: ScanArg,
}

/// Everything needed to audit or repeat one training run.
#[derive(Serialize)]
struct RunManifest<'a> {
    config: &'a ModelConfig,
    seed: u64,
    scene: String,
    checkpoint: String,
    epochs: &'a [EpochRecord],
    metrics: &'a MetricsReport,
}

fn build_config(scene: &HsiScene, args: &TrainArgs) -> Result<ModelConfig, CliError> {
    let mut cfg = ModelConfig::new(scene.channels, scene.class_count);
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    apply!(
        embed_dim, spectral_groups, encoder_depth, state_size, expand, conv_width, dt_rank,
        gn_groups, variant, lr, epochs, seed
    );
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let scene = load_scene(&args.scene)?;
    let cfg = build_config(&scene, &args)?;

    let outcome = train_model(&scene, &cfg, args.scan.into(), |r| {
        println!("epoch {:>4} loss {:.6} val_oa {:.4}", r.epoch, r.train_loss, r.val_oa);
    })?;
    if let (Some(epoch), Some(oa)) = (outcome.best_epoch, outcome.best_val_oa) {
        println!("best epoch {epoch} val_oa {oa:.4}");
    }

    let pred = full_prediction(&outcome.model, &scene, args.scan.into())?;
    let report = evaluate(&pred, &scene.labels, &scene.test_mask, scene.class_count as u16)
        .map_err(|e| CliError::Data(format!("test-mask scoring failed: {e}")))?;
    print!("{}", report.to_kv_text());

    save_checkpoint(&outcome.model, &args.checkpoint)?;
    println!("wrote {}", args.checkpoint.display());

    let manifest_path = args
        .manifest
        .unwrap_or_else(|| PathBuf::from(format!("{}.manifest.json", args.checkpoint.display())));
    let manifest = RunManifest {
        config: &cfg,
        seed: cfg.seed,
        scene: args.scene.display().to_string(),
        checkpoint: args.checkpoint.display().to_string(),
        epochs: &outcome.history,
        metrics: &report,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serialization");
    json.push(b'\n');
    atomic_write(&manifest_path, &json)?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

// ── eval ────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Which mask to score
    #[arg(long, value_enum, default_value_t = MaskArg::Test)]
    mask: MaskArg,
    /// Also write the metrics to this file
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScanArg::Sequential)]
    scan: ScanArg,
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let scene = load_scene(&args.scene)?;
    let model = load_checkpoint(&args.checkpoint)?;
    check_compat(&scene, &model.config)?;

    let pred = full_prediction(&model, &scene, args.scan.into())?;
    let report = evaluate(&pred, &scene.labels, args.mask.select(&scene), scene.class_count as u16)
        .map_err(|e| CliError::Data(format!("{} mask: {e}", args.mask.name())))?;
    let text = report.to_kv_text();
    print!("{text}");
    if let Some(out) = args.out {
        atomic_write(&out, text.as_bytes())?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

// ── predict ─────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// PPM image to write
    #[arg(long)]
    out: PathBuf,
    /// Palette file with one `r g b` line per class; defaults to a built-in
    #[arg(long)]
    palette: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScanArg::Sequential)]
    scan: ScanArg,
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    let scene = load_scene(&args.scene)?;
    let model = load_checkpoint(&args.checkpoint)?;
    check_compat(&scene, &model.config)?;

    let palette = match args.palette {
        Some(path) => Palette::from_file(&path)?,
        None => Palette::default_colors(scene.class_count)?,
    };
    let pred = full_prediction(&model, &scene, args.scan.into())?;
    render_class_map(&pred, scene.width, scene.height, &palette, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

// ── bench ───────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct BenchArgs {
    /// Square sides to measure, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Sequence core: mamba|self-attention
    #[arg(long, default_value = "mamba")]
    variant: SequenceCore,
    /// CSV file to write
    #[arg(long)]
    out: PathBuf,
    /// Forwards per size; the median is reported
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Bands of the hypothetical scene
    #[arg(long, default_value_t = 103)]
    channels: usize,
    /// Classes of the hypothetical scene
    #[arg(long, default_value_t = 9)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if args.sizes.iter().any(|&s| s == 0) {
        return Err(CliError::Usage("--sizes entries must be positive".into()));
    }
    let mut cfg = ModelConfig::new(args.channels, args.classes);
    cfg.seed = args.seed;
    cfg.validate()?;
    let rows = bench_forward(&args.sizes, &cfg, args.variant, args.reps);
    let csv = rows_to_csv(&rows);
    print!("{csv}");
    atomic_write(&args.out, csv.as_bytes())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

// ── shared helpers ──────────────────────────────────────────────────────

fn check_compat(scene: &HsiScene, cfg: &ModelConfig) -> Result<(), CliError> {
    if scene.channels != cfg.spectral_channels {
        return Err(CliError::Data(format!(
            "checkpoint expects {} bands, scene has {}",
            cfg.spectral_channels, scene.channels
        )));
    }
    if scene.class_count != cfg.class_count {
        return Err(CliError::Data(format!(
            "checkpoint expects {} classes, scene has {}",
            cfg.class_count, scene.class_count
        )));
    }
    Ok(())
}

/// Classifies every pixel of the scene. Non-finite logits are a numeric
/// failure, not a prediction.
fn full_prediction(model: &Model, scene: &HsiScene, mode: ScanMode) -> Result<Vec<u16>, CliError> {
    let logits = no_grad(|| model.forward(&scene.to_image_tensor(), mode));
    if logits.to_vec().iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numeric(
            "forward pass produced non-finite logits".into(),
        ));
    }
    Ok(predict_classes(&logits))
}
