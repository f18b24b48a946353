//! Analytic spectral scenes, camera projection and file formats.

pub mod bands;
pub mod camera;
pub mod image;
pub mod io;
pub mod manifest;
pub mod scene;

pub use bands::{parse_band_spec, uniform_grid, validate_wavelengths, LAMBDA_MAX, LAMBDA_MIN};
pub use camera::{project_to_rgb, project_with_weights, CameraResponse};
pub use image::SpectralImage;
pub use manifest::{generate_dataset, DatasetSpec, SceneEntry, SceneManifest, Split};
pub use scene::{generate_scene, SpectralScene};
