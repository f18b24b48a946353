//! Dataset generation and the JSON scene manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NesrError, Result};
use crate::synth::bands::{uniform_grid, validate_wavelengths};
use crate::synth::camera::{project_to_rgb, CameraResponse};
use crate::synth::io::{read_spectral_image, read_tensor, write_spectral_image, write_tensor, Dtype};
use crate::synth::scene::{generate_scene, SpectralScene, MAX_ENDMEMBERS};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn tag(self) -> u64 {
        match self {
            Split::Train => 0x7472_6169_6e00_0000,
            Split::Test => 0x7465_7374_0000_0000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFiles {
    /// Ground-truth spectral image at `wavelengths`.
    pub spectral: String,
    /// `3×H×W` camera rendering of the ground truth.
    pub rgb: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub seed: u64,
    pub files: SceneFiles,
    pub wavelengths: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub endmembers: usize,
}

impl SceneEntry {
    /// Regenerates the analytic scene this entry was rendered from.
    pub fn scene(&self) -> Result<SpectralScene> {
        generate_scene(self.seed, self.height, self.width, self.endmembers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub dataset: String,
    pub split: Split,
    pub scenes: Vec<SceneEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub dataset: String,
    pub split: Split,
    pub scenes: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub wavelengths: Vec<f64>,
}

impl DatasetSpec {
    pub fn new(dataset: impl Into<String>, split: Split, scenes: usize, seed: u64) -> Self {
        DatasetSpec {
            dataset: dataset.into(),
            split,
            scenes,
            height: 64,
            width: 64,
            seed,
            wavelengths: uniform_grid(31),
        }
    }
}

/// Per-scene seeds and endmember counts; train and test draw from distinct
/// streams of the same base seed.
pub fn scene_plan(spec: &DatasetSpec) -> Vec<(String, u64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ spec.split.tag());
    (0..spec.scenes)
        .map(|i| {
            let seed = rng.random::<u64>();
            let k = rng.random_range(2..=MAX_ENDMEMBERS);
            (format!("{:?}-{i:04}", spec.split).to_lowercase(), seed, k)
        })
        .collect()
}

/// In-memory scenes for `spec`, without touching the filesystem.
pub fn generate_scenes(spec: &DatasetSpec) -> Result<Vec<SpectralScene>> {
    scene_plan(spec)
        .into_iter()
        .map(|(_, seed, k)| generate_scene(seed, spec.height, spec.width, k))
        .collect()
}

/// Writes every scene of `spec` under `dir` plus `dir/manifest.json`.
pub fn generate_dataset(spec: &DatasetSpec, dir: &Path) -> Result<SceneManifest> {
    if spec.scenes == 0 {
        return Err(NesrError::Usage("dataset needs at least one scene".into()));
    }
    validate_wavelengths(&spec.wavelengths)?;
    fs::create_dir_all(dir).map_err(|e| NesrError::io(dir, e))?;
    let camera = CameraResponse::default();
    let mut scenes: Vec<SceneEntry> = scene_plan(spec)
        .into_par_iter()
        .map(|(id, seed, k)| -> Result<SceneEntry> {
            let scene = generate_scene(seed, spec.height, spec.width, k)?;
            let gt = scene.sample_bands(&spec.wavelengths)?;
            let rgb = project_to_rgb(&gt, &camera)?;
            let files = SceneFiles {
                spectral: format!("{id}.spectral.nsrt"),
                rgb: format!("{id}.rgb.nsrt"),
            };
            write_spectral_image(dir.join(&files.spectral), &gt, Dtype::F64)?;
            write_tensor(dir.join(&files.rgb), &rgb, Dtype::F64)?;
            Ok(SceneEntry {
                id,
                seed,
                files,
                wavelengths: spec.wavelengths.clone(),
                height: spec.height,
                width: spec.width,
                endmembers: k,
            })
        })
        .collect::<Result<_>>()?;
    scenes.sort_by(|a, b| a.id.cmp(&b.id));
    let manifest = SceneManifest {
        dataset: spec.dataset.clone(),
        split: spec.split,
        scenes,
    };
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

impl SceneManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| NesrError::io(path, e))
    }

    /// Loads a manifest from a file, or from `manifest.json` inside a directory.
    pub fn load(path: &Path) -> Result<(SceneManifest, PathBuf)> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(|e| NesrError::io(&file, e))?;
        let manifest: SceneManifest = serde_json::from_str(&text)?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, root))
    }

    pub fn scenes(&self) -> Result<Vec<SpectralScene>> {
        self.scenes.iter().map(SceneEntry::scene).collect()
    }

    /// Reads every listed file back and checks it against the regenerated scene.
    pub fn verify(&self, root: &Path) -> Result<()> {
        let camera = CameraResponse::default();
        for entry in &self.scenes {
            let stored = read_spectral_image(root.join(&entry.files.spectral))?;
            let rgb = read_tensor(root.join(&entry.files.rgb))?;
            let fresh = entry.scene()?.sample_bands(&entry.wavelengths)?;
            if stored != fresh || rgb != project_to_rgb(&fresh, &camera)? {
                return Err(NesrError::Config(format!(
                    "scene {} does not match its seed {}",
                    entry.id, entry.seed
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trips_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = DatasetSpec::new("unit", Split::Train, 3, 7);
        spec.height = 8;
        spec.width = 8;
        let a = generate_dataset(&spec, &dir.path().join("a")).unwrap();
        let b = generate_dataset(&spec, &dir.path().join("b")).unwrap();
        assert_eq!(a, b);
        let (loaded, root) = SceneManifest::load(&dir.path().join("a")).unwrap();
        assert_eq!(loaded, a);
        loaded.verify(&root).unwrap();
        let text_a = fs::read(dir.path().join("a").join(MANIFEST_FILE)).unwrap();
        let text_b = fs::read(dir.path().join("b").join(MANIFEST_FILE)).unwrap();
        assert_eq!(text_a, text_b);
    }

    #[test]
    fn splits_use_distinct_seeds() {
        let train = scene_plan(&DatasetSpec::new("d", Split::Train, 4, 1));
        let test = scene_plan(&DatasetSpec::new("d", Split::Test, 4, 1));
        assert!(train.iter().all(|t| test.iter().all(|s| s.1 != t.1)));
        assert_eq!(train[2].0, "train-0002");
        assert!(train.iter().all(|t| (2..=8).contains(&t.2)));
    }
}
