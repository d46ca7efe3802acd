//! Pipeline configuration: one JSON document with per-stage sections.
//! Every field has a default, so partial configs and CLI flag overrides
//! compose (defaults < file < flags).

use std::path::Path;

use crate::diffusion::denoiser::DenoiserConfig;
use crate::diffusion::train::DiffusionTrainConfig;
use crate::error::Result;
use crate::toy::ToyStyle;
use crate::vae::train::VaeTrainConfig;
use crate::vae::VaeConfig;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SceneGenConfig {
    pub styles: Vec<ToyStyle>,
    pub scenes_per_style: usize,
    pub dims: [usize; 3],
    pub seed: u64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            styles: vec![ToyStyle::Towers, ToyStyle::Blocks],
            scenes_per_style: 2,
            dims: [80, 224, 80],
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub chunk_size: usize,
    pub quads_per_scene: usize,
    pub depth_threshold: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { chunk_size: 32, quads_per_scene: 64, depth_threshold: 2.5 }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DiffusionConfig {
    pub denoiser: DenoiserConfig,
    pub t_max: usize,
    pub inference_steps: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig { denoiser: DenoiserConfig::default(), t_max: 1000, inference_steps: 50 }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    /// "explicit" or "repaint".
    pub method: String,
    pub resample_r: usize,
    /// 0 = schedule default.
    pub steps: usize,
    /// Worker threads; 0 = logical cores.
    pub parallel: usize,
    /// Decode lattice points per chunk side; 0 = chunk size.
    pub resolution: usize,
    /// Overwrite conditioned cells on write-back (the literal algorithm).
    pub overwrite_conditioned: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            rows: 4,
            cols: 4,
            seed: 99,
            method: "explicit".into(),
            resample_r: 5,
            steps: 0,
            parallel: 0,
            resolution: 0,
            overwrite_conditioned: true,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Stratified occupancy queries per chunk.
    pub queries_per_chunk: usize,
    /// Surface points per chunk for CD / F-Score.
    pub surface_points: usize,
    /// Cap on evaluated validation chunks (0 = all).
    pub max_chunks: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { queries_per_chunk: 2048, surface_points: 2048, max_chunks: 64, seed: 5 }
    }
}

#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub scene: SceneGenConfig,
    pub dataset: DatasetConfig,
    pub vae: VaeConfig,
    pub vae_train: VaeTrainConfig,
    pub diffusion: DiffusionConfig,
    pub diffusion_train: DiffusionTrainConfig,
    pub generate: GenerateConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// The denoiser must agree with the VAE latent geometry and the decode
    /// resolution defaults to the chunk size.
    pub fn normalized(mut self) -> Self {
        self.vae.chunk_size = self.dataset.chunk_size;
        self.diffusion.denoiser.latent_count = self.vae.latent_count;
        self.diffusion.denoiser.channels = self.vae.channels;
        if self.generate.resolution == 0 {
            self.generate.resolution = self.dataset.chunk_size;
        }
        if self.generate.steps == 0 {
            self.generate.steps = self.diffusion.inference_steps;
        }
        self
    }
}
