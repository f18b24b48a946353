//! Benchmark protocols: arbitrary band counts, extreme band counts,
//! spectral super-resolution and architecture ablations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{NesrError, Result};
use crate::eval::baseline::{baseline_bi, spectral_bi};
use crate::eval::evaluate::{evaluate, evaluate_with, predict, resize_bands};
use crate::eval::metrics::Metrics;
use crate::eval::report::{config_hash, EvalReport};
use crate::model::{AttentionVariant, ModelConfig};
use crate::synth::bands::uniform_grid;
use crate::synth::scene::SpectralScene;
use crate::train::{render_input, train, Checkpoint, InputMode, TrainConfig};

pub const ARBITRARY_BANDS: [usize; 4] = [31, 16, 11, 7];
pub const EXTREME_BANDS: [usize; 3] = [41, 51, 61];
pub const SSR_BANDS: [usize; 2] = [31, 61];
pub const SSR_INPUT_BANDS: usize = 16;
/// Band count of the intermediate reconstruction in the two-step variants.
pub const TWO_STEP_SOURCE_BANDS: usize = 61;
pub const ABLATION_BANDS: usize = 31;
/// Largest allowed ratio of single-model to dedicated-model MRAE.
pub const ARBITRARY_TOLERANCE: f64 = 1.5;

pub const MODEL_KEY: &str = "model";
pub const SSR_KEY: &str = "ssr";

pub fn fixed_key(bands: usize) -> String {
    format!("fixed-{bands}")
}

pub fn ablation_key(variant: &str) -> String {
    format!("ablation-{variant}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    Arbitrary,
    Extreme,
    Ssr,
    Ablation,
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Arbitrary => "arbitrary",
            BenchMode::Extreme => "extreme",
            BenchMode::Ssr => "ssr",
            BenchMode::Ablation => "ablation",
        })
    }
}

impl FromStr for BenchMode {
    type Err = NesrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arbitrary" => Ok(BenchMode::Arbitrary),
            "extreme" => Ok(BenchMode::Extreme),
            "ssr" => Ok(BenchMode::Ssr),
            "ablation" => Ok(BenchMode::Ablation),
            other => Err(NesrError::Usage(format!(
                "unknown bench mode '{other}' (expected arbitrary, extreme, ssr or ablation)"
            ))),
        }
    }
}

/// The single-variant configurations compared against the full model.
pub fn ablation_variants(base: &ModelConfig) -> Vec<(&'static str, ModelConfig)> {
    let full = ModelConfig {
        enable_spi: true,
        enable_nam: true,
        attention_variant: AttentionVariant::SpatialSpectral,
        ..base.clone()
    };
    vec![
        ("full", full.clone()),
        ("no-spi", ModelConfig { enable_spi: false, ..full.clone() }),
        ("no-nam", ModelConfig { enable_nam: false, ..full.clone() }),
        (
            "spectral",
            ModelConfig {
                attention_variant: AttentionVariant::Spectral,
                ..full.clone()
            },
        ),
        (
            "spatial",
            ModelConfig {
                attention_variant: AttentionVariant::Spatial,
                ..full
            },
        ),
    ]
}

pub struct BenchSetup<'a> {
    /// Trained models by key (`model`, `fixed-<B>`, `ssr`, `ablation-<variant>`).
    pub checkpoints: BTreeMap<String, Checkpoint>,
    pub test_scenes: &'a [SpectralScene],
    /// Needed only when ablation variants must be trained.
    pub train_scenes: Option<&'a [SpectralScene]>,
    pub ablation_base: Option<(ModelConfig, TrainConfig)>,
    pub workers: usize,
    /// Single worker and no wall-clock field.
    pub strict: bool,
}

impl BenchSetup<'_> {
    fn workers(&self) -> usize {
        if self.strict {
            1
        } else {
            self.workers
        }
    }

    fn require(&self, key: &str, mode: BenchMode) -> Result<&Checkpoint> {
        self.checkpoints
            .get(key)
            .ok_or_else(|| NesrError::Usage(format!("bench mode '{mode}' needs a '{key}' checkpoint")))
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    mode: String,
    scenes: Vec<u64>,
    checkpoints: Vec<(&'a str, &'a ModelConfig, &'a TrainConfig, u64)>,
}

fn model_metrics(ckpt: &Checkpoint, setup: &BenchSetup<'_>, bands: usize) -> Result<Metrics> {
    evaluate(ckpt, setup.test_scenes, &uniform_grid(bands), setup.workers())
}

/// Model reconstruction at `source` bands, then linear resize to `bands`.
fn two_step_metrics(ckpt: &Checkpoint, setup: &BenchSetup<'_>, source: usize, bands: usize) -> Result<Metrics> {
    let source_grid = uniform_grid(source);
    evaluate_with(setup.test_scenes, &uniform_grid(bands), setup.workers(), |scene| {
        let full = predict(&ckpt.model, &ckpt.weights, ckpt.train.input, scene, &source_grid)?;
        resize_bands(&full, bands)
    })
}

fn rgb_bi_metrics(setup: &BenchSetup<'_>, bands: usize) -> Result<Metrics> {
    let grid = uniform_grid(bands);
    evaluate_with(setup.test_scenes, &grid, setup.workers(), |scene| {
        Ok(baseline_bi(&render_input(scene, InputMode::Rgb)?, &grid)?.into_volume())
    })
}

fn spectral_bi_metrics(setup: &BenchSetup<'_>, bands: usize) -> Result<Metrics> {
    let grid = uniform_grid(bands);
    evaluate_with(setup.test_scenes, &grid, setup.workers(), |scene| {
        let input = scene.sample_bands(&uniform_grid(SSR_INPUT_BANDS))?;
        Ok(spectral_bi(&input, &grid)?.into_volume())
    })
}

fn beats(report: &mut EvalReport, name: String, experiment: &str, bands: usize, method: &str, baseline: &str) {
    let (Some(m), Some(b)) = (report.row(experiment, bands, method), report.row(experiment, bands, baseline)) else {
        return;
    };
    let detail = format!("{method} {:.5} vs {baseline} {:.5}", m.mrae, b.mrae);
    let passed = m.mrae < b.mrae;
    report.check(name, passed, detail);
}

/// Trains every ablation variant of `base` that `checkpoints` lacks.
pub fn train_missing_ablations(
    checkpoints: &mut BTreeMap<String, Checkpoint>,
    base: &(ModelConfig, TrainConfig),
    scenes: &[SpectralScene],
) -> Result<()> {
    for (name, model) in ablation_variants(&base.0) {
        let key = ablation_key(name);
        if checkpoints.contains_key(&key) {
            continue;
        }
        info!("training ablation variant {name}");
        checkpoints.insert(key, train(scenes.to_vec(), model, base.1.clone())?);
    }
    Ok(())
}

pub fn benchmark_suite(mode: BenchMode, setup: &mut BenchSetup<'_>) -> Result<EvalReport> {
    let start = Instant::now();
    if setup.test_scenes.is_empty() {
        return Err(NesrError::Usage("benchmark needs at least one test scene".into()));
    }
    if mode == BenchMode::Ablation {
        let missing = ablation_variants(&ModelConfig::default())
            .iter()
            .any(|(n, _)| !setup.checkpoints.contains_key(&ablation_key(n)));
        if missing {
            match (&setup.ablation_base, setup.train_scenes) {
                (Some(base), Some(scenes)) => train_missing_ablations(&mut setup.checkpoints, base, scenes)?,
                _ => {
                    return Err(NesrError::Usage(format!(
                        "bench mode '{mode}' needs ablation checkpoints or training scenes and base configs"
                    )))
                }
            }
        }
    }

    let keys: Vec<String> = match mode {
        BenchMode::Arbitrary => {
            let mut k = vec![MODEL_KEY.to_string()];
            k.extend(ARBITRARY_BANDS.iter().map(|&b| fixed_key(b)).filter(|k| setup.checkpoints.contains_key(k)));
            k
        }
        BenchMode::Extreme => vec![MODEL_KEY.to_string()],
        BenchMode::Ssr => vec![SSR_KEY.to_string()],
        BenchMode::Ablation => ablation_variants(&ModelConfig::default())
            .iter()
            .map(|(n, _)| ablation_key(n))
            .collect(),
    };
    for key in &keys {
        setup.require(key, mode)?;
    }
    let hash = config_hash(&HashInput {
        mode: mode.to_string(),
        scenes: setup.test_scenes.iter().map(|s| s.seed).collect(),
        checkpoints: keys
            .iter()
            .map(|k| {
                let c = &setup.checkpoints[k];
                (k.as_str(), &c.model, &c.train, c.iteration)
            })
            .collect(),
    })?;
    let mut report = EvalReport::new(&mode.to_string(), hash);
    for key in &keys {
        report.seeds.insert(format!("train:{key}"), setup.checkpoints[key].train.seed);
    }
    for (i, s) in setup.test_scenes.iter().enumerate() {
        report.seeds.insert(format!("scene:{i:04}"), s.seed);
    }

    let exp = mode.to_string();
    match mode {
        BenchMode::Arbitrary => {
            let model = setup.require(MODEL_KEY, mode)?;
            for &b in &ARBITRARY_BANDS {
                report.push(&exp, b, "model", model_metrics(model, setup, b)?)?;
                report.push(&exp, b, "bi", rgb_bi_metrics(setup, b)?)?;
                report.push(&exp, b, "two-step", two_step_metrics(model, setup, TWO_STEP_SOURCE_BANDS, b)?)?;
                if let Some(fixed) = setup.checkpoints.get(&fixed_key(b)) {
                    report.push(&exp, b, "fixed", model_metrics(fixed, setup, b)?)?;
                }
            }
            for &b in &ARBITRARY_BANDS {
                beats(&mut report, format!("model beats bi at {b} bands"), &exp, b, "model", "bi");
                if let (Some(m), Some(f)) = (report.row(&exp, b, "model"), report.row(&exp, b, "fixed")) {
                    let ratio = m.mrae / f.mrae;
                    report.check(
                        format!("model within {ARBITRARY_TOLERANCE}x of fixed at {b} bands"),
                        ratio <= ARBITRARY_TOLERANCE,
                        format!("model {:.5} / fixed {:.5} = {ratio:.3}", m.mrae, f.mrae),
                    );
                }
            }
            report.notes.push(format!(
                "two-step: model at {TWO_STEP_SOURCE_BANDS} bands, then endpoint-aligned linear resize"
            ));
        }
        BenchMode::Extreme => {
            let model = setup.require(MODEL_KEY, mode)?;
            let (_, trained_max) = model.train.band_sampling.range();
            report.notes.push(format!("model trained on at most {trained_max} bands"));
            for &b in &EXTREME_BANDS {
                report.push(&exp, b, "model", model_metrics(model, setup, b)?)?;
                report.push(&exp, b, "bi", rgb_bi_metrics(setup, b)?)?;
                report.push(&exp, b, "model31-interp", two_step_metrics(model, setup, 31, b)?)?;
            }
            for &b in &EXTREME_BANDS {
                beats(&mut report, format!("model beats bi at {b} bands"), &exp, b, "model", "bi");
            }
        }
        BenchMode::Ssr => {
            let model = setup.require(SSR_KEY, mode)?;
            if model.train.input != InputMode::Spectral(SSR_INPUT_BANDS) {
                return Err(NesrError::Usage(format!(
                    "bench mode '{mode}' needs a checkpoint trained on {SSR_INPUT_BANDS}-band input"
                )));
            }
            for &b in &SSR_BANDS {
                report.push(&exp, b, "model", model_metrics(model, setup, b)?)?;
                report.push(&exp, b, "spectral-bi", spectral_bi_metrics(setup, b)?)?;
            }
            for &b in &SSR_BANDS {
                beats(&mut report, format!("model beats spectral bi at {b} bands"), &exp, b, "model", "spectral-bi");
            }
        }
        BenchMode::Ablation => {
            let variants = ablation_variants(&ModelConfig::default());
            for (name, _) in &variants {
                let ckpt = setup.require(&ablation_key(name), mode)?;
                report.push(&exp, ABLATION_BANDS, name, model_metrics(ckpt, setup, ABLATION_BANDS)?)?;
            }
            let full = report.row(&exp, ABLATION_BANDS, "full").expect("pushed above").mrae;
            for (name, _) in variants.iter().skip(1) {
                let other = report.row(&exp, ABLATION_BANDS, name).expect("pushed above").mrae;
                report.check(
                    format!("full <= {name}"),
                    full <= other,
                    format!("full {full:.5} vs {name} {other:.5}"),
                );
            }
        }
    }
    let mut grids: Vec<usize> = report.rows.iter().map(|r| r.bands).collect();
    match mode {
        BenchMode::Arbitrary => grids.push(TWO_STEP_SOURCE_BANDS),
        BenchMode::Extreme => grids.push(31),
        BenchMode::Ssr => grids.push(SSR_INPUT_BANDS),
        BenchMode::Ablation => {}
    }
    grids.sort_unstable();
    grids.dedup();
    for b in grids {
        report.band_grids.insert(b.to_string(), uniform_grid(b));
    }
    if !setup.strict {
        report.wall_clock_secs = Some(start.elapsed().as_secs_f64());
    }
    Ok(report)
}
