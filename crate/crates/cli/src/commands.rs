use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use nesr_core::eval::bench::{train_missing_ablations, MODEL_KEY};
use nesr_core::eval::{
    baseline_bi, benchmark_suite, config_hash, error_map, evaluate, evaluate_with, metrics, spectral_bi, with_workers, write_pgm, BenchMode,
    BenchSetup, EvalReport, ERROR_MAP_MAX,
};
use nesr_core::eval::metrics::DEFAULT_EPS;
use nesr_core::model::forward;
use nesr_core::synth::io::{read_spectral_image, read_tensor, write_spectral_image, write_tensor, Dtype};
use nesr_core::synth::manifest::{generate_scenes, MANIFEST_FILE};
use nesr_core::synth::{generate_dataset, parse_band_spec, uniform_grid, DatasetSpec, SceneManifest, SpectralScene, Split};
use nesr_core::train::{render_input, Checkpoint, InputMode, Trainer};
use nesr_core::{NesrError, Result};
use nesr_tensor::Tensor;
use serde::Serialize;

use crate::config::RunConfig;

/// The resolved configuration; loadable again with `--config`.
pub const CONFIG_ECHO: &str = "config.json";
pub const RUN_INFO: &str = "run.json";
pub const REPORT_FILE: &str = "report.json";
pub const FINAL_CHECKPOINT: &str = "model.nsrc";
pub const LOSSES_FILE: &str = "losses.json";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.nsrt";
pub const ERROR_MAP_TENSOR: &str = "error_map.nsrt";
pub const ERROR_MAP_PGM: &str = "error_map.pgm";

#[derive(Debug, Parser)]
#[command(name = "nesr", version, about = "Continuous spectral reconstruction from RGB images")]
pub struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file (model, train, data and seed sections).
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Dotted override such as `train.lr0=0.001`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Base seed; falls back to the config file, then NESR_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,

    /// Single worker and no wall-clock fields, so artifacts compare byte for byte.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train and test scenes with their manifests.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Training scenes (overrides data.train_scenes).
        #[arg(long)]
        scenes: Option<usize>,
        /// Test scenes (overrides data.test_scenes).
        #[arg(long)]
        test_scenes: Option<usize>,
    },
    /// Train a model and write checkpoints plus the loss trace.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output of gen-data; scenes are generated in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from this checkpoint up to train.max_iters.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test scenes.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Band grid as start:step:stop in nm.
        #[arg(long, default_value = "400:10:700")]
        bands: String,
    },
    /// Run a benchmark protocol and write its report.
    Bench {
        #[command(flatten)]
        common: Common,
        /// arbitrary, extreme, ssr or ablation.
        #[arg(long)]
        mode: BenchMode,
        /// `key=path` (keys: model, fixed-<B>, ssr, ablation-<variant>); may be repeated.
        #[arg(long = "checkpoint", value_name = "KEY=PATH")]
        checkpoints: Vec<String>,
        /// Directory whose `<key>.nsrc` files are loaded as checkpoints.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Reconstruct one image at an arbitrary band grid.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input tensor file (3×H×W for RGB models, a spectral image otherwise).
        #[arg(long, conflicts_with = "scene")]
        input: Option<PathBuf>,
        /// Scene id from the manifest under --data; its analytic ground truth is used.
        #[arg(long, requires = "data")]
        scene: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Ground-truth spectral image on the same band grid.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, default_value = "400:10:700")]
        bands: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Bench { .. } => "bench",
            Command::Reconstruct { .. } => "reconstruct",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::GenData { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Bench { common, .. }
            | Command::Reconstruct { common, .. } => common,
        }
    }
}

#[derive(Serialize)]
struct RunInfo<'a> {
    version: &'a str,
    command: &'a str,
    seed: u64,
    argv: Vec<String>,
}

struct Context {
    config: RunConfig,
    out: PathBuf,
    workers: usize,
    strict: bool,
}

impl Context {
    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| NesrError::io(path, e))
}

fn echo(command: &Command, config: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| NesrError::io(out, e))?;
    write_json(&out.join(CONFIG_ECHO), config)?;
    let info = RunInfo {
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        seed: config.seed(),
        argv: std::env::args().skip(1).collect(),
    };
    write_json(&out.join(RUN_INFO), &info)
}

pub fn run(cli: Cli) -> Result<()> {
    let common = cli.command.common();
    let mut config = RunConfig::resolve(common.config.as_deref(), &common.overrides, common.seed)?;
    if let Command::GenData { scenes, test_scenes, .. } = &cli.command {
        config.data.train_scenes = scenes.unwrap_or(config.data.train_scenes);
        config.data.test_scenes = test_scenes.unwrap_or(config.data.test_scenes);
    }
    echo(&cli.command, &config, &common.out)?;
    let workers = if common.strict { 1 } else { common.workers };
    let ctx = Context {
        config,
        out: common.out.clone(),
        workers,
        strict: common.strict,
    };
    with_workers(workers, || dispatch(&cli.command, &ctx))?
}

fn dispatch(command: &Command, ctx: &Context) -> Result<()> {
    match command {
        Command::GenData { .. } => gen_data(ctx),
        Command::Train { data, resume, .. } => train(ctx, data.as_deref(), resume.as_deref()),
        Command::Eval { checkpoint, data, bands, .. } => eval(ctx, checkpoint, data.as_deref(), bands),
        Command::Bench {
            mode,
            checkpoints,
            checkpoint_dir,
            data,
            ..
        } => bench(ctx, *mode, checkpoints, checkpoint_dir.as_deref(), data.as_deref()),
        Command::Reconstruct {
            checkpoint,
            input,
            scene,
            data,
            gt,
            bands,
            ..
        } => reconstruct(ctx, checkpoint, input.as_deref(), scene.as_deref(), data.as_deref(), gt.as_deref(), bands),
    }
}

fn split_dir(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

fn dataset_spec(config: &RunConfig, split: Split) -> DatasetSpec {
    let d = &config.data;
    let count = match split {
        Split::Train => d.train_scenes,
        Split::Test => d.test_scenes,
    };
    DatasetSpec {
        height: d.height,
        width: d.width,
        ..DatasetSpec::new(d.dataset.clone(), split, count, config.seed())
    }
}

fn gen_data(ctx: &Context) -> Result<()> {
    for split in [Split::Train, Split::Test] {
        let dir = ctx.path(split_dir(split));
        let manifest = generate_dataset(&dataset_spec(&ctx.config, split), &dir)?;
        info!("wrote {} {} scenes to {}", manifest.scenes.len(), split_dir(split), dir.display());
    }
    Ok(())
}

/// Scenes of `split` from a gen-data directory (or a manifest path), else
/// generated in memory from the configuration.
fn load_scenes(config: &RunConfig, data: Option<&Path>, split: Split) -> Result<Vec<SpectralScene>> {
    match data {
        Some(dir) => {
            let nested = dir.join(split_dir(split));
            let path = if nested.join(MANIFEST_FILE).is_file() { nested } else { dir.to_path_buf() };
            let (manifest, _) = SceneManifest::load(&path)?;
            if manifest.split != split {
                return Err(NesrError::Usage(format!(
                    "{} holds {} scenes, expected {}",
                    path.display(),
                    split_dir(manifest.split),
                    split_dir(split)
                )));
            }
            manifest.scenes()
        }
        None => generate_scenes(&dataset_spec(config, split)),
    }
}

fn train(ctx: &Context, data: Option<&Path>, resume: Option<&Path>) -> Result<()> {
    let scenes = load_scenes(&ctx.config, data, Split::Train)?;
    let mut trainer = match resume {
        Some(path) => {
            let mut t = Trainer::resume(Checkpoint::load(path)?, scenes)?;
            t.extend_to(ctx.config.train.max_iters);
            t
        }
        None => Trainer::new(ctx.config.model.clone(), ctx.config.train.clone(), scenes)?,
    };
    let start = Instant::now();
    trainer.run(|ckpt| {
        let path = ctx.path(&format!("checkpoint-{:06}.nsrc", ckpt.iteration));
        info!("checkpoint {}", path.display());
        ckpt.save(&path)
    })?;
    trainer.checkpoint().save(ctx.path(FINAL_CHECKPOINT))?;
    write_json(&ctx.path(LOSSES_FILE), &trainer.losses())?;
    info!("trained to iteration {} in {:.1}s", trainer.iteration(), start.elapsed().as_secs_f64());
    Ok(())
}

fn scene_seeds(config: &RunConfig, data: Option<&Path>, split: Split) -> Result<Vec<u64>> {
    match data {
        Some(dir) => {
            let nested = dir.join(split_dir(split));
            let path = if nested.join(MANIFEST_FILE).is_file() { nested } else { dir.to_path_buf() };
            Ok(SceneManifest::load(&path)?.0.scenes.iter().map(|s| s.seed).collect())
        }
        None => Ok(nesr_core::synth::manifest::scene_plan(&dataset_spec(config, split))
            .into_iter()
            .map(|(_, seed, _)| seed)
            .collect()),
    }
}

fn finish_report(ctx: &Context, mut report: EvalReport, start: Instant) -> Result<()> {
    report.wall_clock_secs = if ctx.strict { None } else { Some(start.elapsed().as_secs_f64()) };
    report.save(&ctx.path(REPORT_FILE))?;
    println!("{}", report.table());
    Ok(())
}

fn eval(ctx: &Context, checkpoint: &Path, data: Option<&Path>, bands: &str) -> Result<()> {
    let start = Instant::now();
    let grid = parse_band_spec(bands)?;
    let scenes = load_scenes(&ctx.config, data, Split::Test)?;
    if scenes.is_empty() {
        return Err(NesrError::Usage("no test scenes to evaluate".into()));
    }
    let ckpt = Checkpoint::load(checkpoint)?;
    let seeds = scene_seeds(&ctx.config, data, Split::Test)?;
    let hash = config_hash(&(&ckpt.model, &ckpt.train, ckpt.iteration, &grid, &seeds))?;
    let mut report = EvalReport::new("eval", hash);
    for (i, seed) in seeds.iter().enumerate() {
        report.seeds.insert(format!("scene:{i:04}"), *seed);
    }
    report.seeds.insert("train".into(), ckpt.train.seed);
    report.band_grids.insert(grid.len().to_string(), grid.clone());
    let b = grid.len();
    report.push("eval", b, "model", evaluate(&ckpt, &scenes, &grid, ctx.workers)?)?;
    let baseline = match ckpt.train.input {
        InputMode::Rgb => evaluate_with(&scenes, &grid, ctx.workers, |scene| {
            Ok(baseline_bi(&render_input(scene, InputMode::Rgb)?, &grid)?.into_volume())
        })?,
        InputMode::Spectral(n) => evaluate_with(&scenes, &grid, ctx.workers, |scene| {
            Ok(spectral_bi(&scene.sample_bands(&uniform_grid(n))?, &grid)?.into_volume())
        })?,
    };
    report.push("eval", b, "bi", baseline)?;
    finish_report(ctx, report, start)
}

/// Parses repeated `key=path` flags and `<key>.nsrc` files of a directory.
fn load_checkpoints(specs: &[String], dir: Option<&Path>) -> Result<BTreeMap<String, Checkpoint>> {
    let mut map = BTreeMap::new();
    if let Some(dir) = dir {
        let entries = fs::read_dir(dir).map_err(|e| NesrError::io(dir, e))?;
        let mut paths: Vec<PathBuf> = entries
            .map(|e| e.map(|e| e.path()).map_err(|err| NesrError::io(dir, err)))
            .collect::<Result<_>>()?;
        paths.sort();
        for path in paths {
            if path.extension().is_some_and(|x| x == "nsrc") {
                let key = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                map.insert(key, Checkpoint::load(&path)?);
            }
        }
    }
    for spec in specs {
        let (key, path) = spec
            .split_once('=')
            .ok_or_else(|| NesrError::Usage(format!("checkpoint '{spec}' must look like key=path")))?;
        map.insert(key.to_string(), Checkpoint::load(path)?);
    }
    Ok(map)
}

fn bench(ctx: &Context, mode: BenchMode, specs: &[String], dir: Option<&Path>, data: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let mut checkpoints = load_checkpoints(specs, dir)?;
    let test = load_scenes(&ctx.config, data, Split::Test)?;
    let train = if mode == BenchMode::Ablation {
        Some(load_scenes(&ctx.config, data, Split::Train)?)
    } else {
        None
    };
    let base = (ctx.config.model.clone(), ctx.config.train.clone());
    if let Some(scenes) = &train {
        train_missing_ablations(&mut checkpoints, &base, scenes)?;
        for (key, ckpt) in &checkpoints {
            if key != MODEL_KEY {
                ckpt.save(ctx.path(&format!("{key}.nsrc")))?;
            }
        }
    }
    let mut setup = BenchSetup {
        checkpoints,
        test_scenes: &test,
        train_scenes: train.as_deref(),
        ablation_base: Some(base),
        workers: ctx.workers,
        strict: ctx.strict,
    };
    let report = benchmark_suite(mode, &mut setup)?;
    for check in report.checks.iter().filter(|c| !c.passed) {
        log::warn!("check failed: {} ({})", check.name, check.detail);
    }
    finish_report(ctx, report, start)
}

/// A tensor file read as a spectral image when it carries wavelengths, else as a plain tensor.
fn read_input(path: &Path) -> Result<Tensor> {
    match read_spectral_image(path) {
        Ok(img) => Ok(img.into_volume()),
        Err(_) => read_tensor(path),
    }
}

fn find_scene(data: &Path, id: &str) -> Result<SpectralScene> {
    for split in [Split::Test, Split::Train] {
        let dir = data.join(split_dir(split));
        let path = if dir.join(MANIFEST_FILE).is_file() { dir } else { data.to_path_buf() };
        let Ok((manifest, _)) = SceneManifest::load(&path) else { continue };
        if let Some(entry) = manifest.scenes.iter().find(|e| e.id == id) {
            return entry.scene();
        }
    }
    Err(NesrError::Usage(format!("scene '{id}' is not listed under {}", data.display())))
}

fn reconstruct(
    ctx: &Context,
    checkpoint: &Path,
    input: Option<&Path>,
    scene: Option<&str>,
    data: Option<&Path>,
    gt: Option<&Path>,
    bands: &str,
) -> Result<()> {
    let grid = parse_band_spec(bands)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let (image, analytic) = match (input, scene, data) {
        (Some(path), _, _) => (read_input(path)?, None),
        (None, Some(id), Some(dir)) => {
            let scene = find_scene(dir, id)?;
            (render_input(&scene, ckpt.train.input)?, Some(scene))
        }
        _ => return Err(NesrError::Usage("reconstruct needs --input or --data with --scene".into())),
    };
    let channels = ckpt.train.input.channels();
    if image.rank() != 3 || image.shape()[0] != channels {
        return Err(NesrError::Usage(format!(
            "checkpoint expects a {channels}×H×W input, got {:?}",
            image.shape()
        )));
    }
    let prediction = forward(&image, &grid, &ckpt.model, &ckpt.weights)?;
    write_spectral_image(ctx.path(RECONSTRUCTION_FILE), &prediction, Dtype::F64)?;
    info!("wrote {} bands to {}", grid.len(), ctx.path(RECONSTRUCTION_FILE).display());
    let truth = match (gt, analytic) {
        (Some(path), _) => {
            let img = read_spectral_image(path)?;
            if img.wavelengths() != grid.as_slice() {
                return Err(NesrError::Usage(format!(
                    "ground truth {} is not sampled on the {}-band grid {bands}",
                    path.display(),
                    grid.len()
                )));
            }
            Some(img)
        }
        (None, Some(scene)) => Some(scene.sample_bands(&grid)?),
        (None, None) => None,
    };
    if let Some(truth) = truth {
        let map = error_map(prediction.volume(), truth.volume(), DEFAULT_EPS)?;
        write_tensor(ctx.path(ERROR_MAP_TENSOR), &map, Dtype::F64)?;
        write_pgm(&ctx.path(ERROR_MAP_PGM), &map, ERROR_MAP_MAX)?;
        let m = metrics(prediction.volume(), truth.volume(), DEFAULT_EPS)?;
        println!("mrae {:.6} rmse {:.6}", m.mrae, m.rmse);
    }
    Ok(())
}
