//! Chunk-latent synthesis of unbounded boxy scenes.
//!
//! The pipeline runs in stages: procedural toy scenes become occupancy
//! grids (`voxel`), quad-chunks are sampled from them (`chunks`), a
//! vector-set VAE compresses each chunk into a small latent (`vae`), a
//! masked-conditioning DDPM outpaints 2x2 quads of latents (`diffusion`),
//! and a raster-scan generator stitches quads into arbitrarily large
//! scenes (`generate`). `nn` holds the tensor/autodiff kernels everything
//! trains on; `eval` the reconstruction metrics; `pipeline` the
//! end-to-end orchestration used by the CLI.

pub mod chunks;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod generate;
pub mod gradsuite;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod toy;
pub mod vae;
pub mod voxel;
mod wire;

pub use error::{Error, Result};
pub use rng::Rng;
