//! Command-line entry point tying the pipeline together: scene synthesis,
//! preprocessing, chunk sampling, VAE and diffusion training, generation,
//! decoding, evaluation, and format inspection.
//!
//! Every command reads an optional JSON config; flags override file values
//! (defaults < file < flags). Exit code 0 on success, 1 with a diagnostic
//! on any pipeline error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vecscene_core::config::PipelineConfig;
use vecscene_core::pipeline;

#[derive(Parser)]
#[command(name = "vecscene", version, about = "Chunk-latent unbounded scene synthesis")]
struct Cli {
    /// JSON pipeline config; omit to use built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print per-stage progress.
    #[arg(long, global = true, default_value_t = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural toy scenes as NUIV voxel files.
    Synth {
        /// Output directory for scenes and specs.json.
        #[arg(long, default_value = "work/scenes")]
        out: PathBuf,
    },
    /// Voxelize / flood-fill / ground-fix a mesh or voxel file.
    Preprocess {
        /// Input .obj mesh or .nuiv voxel file.
        input: PathBuf,
        /// Output .nuiv path.
        #[arg(long)]
        out: PathBuf,
        /// Voxels along the longest bounding-box axis (for mesh input).
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        /// Ground level (y index); auto-detected when omitted.
        #[arg(long)]
        ground_level: Option<usize>,
    },
    /// Sample quad chunks from scenes into a dataset directory.
    SampleChunks {
        /// Directory of .nuiv scenes (as produced by synth).
        #[arg(long, default_value = "work/scenes")]
        scenes: PathBuf,
        /// Output dataset directory.
        #[arg(long, default_value = "work/dataset")]
        out: PathBuf,
    },
    /// Train the chunk VAE on a dataset.
    TrainVae {
        #[arg(long, default_value = "work/dataset")]
        dataset: PathBuf,
        #[arg(long, default_value = "work/vae.nuip")]
        out: PathBuf,
        /// Override training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Encode every dataset chunk into latent sets with a trained VAE.
    EncodeLatents {
        #[arg(long, default_value = "work/dataset")]
        dataset: PathBuf,
        #[arg(long, default_value = "work/vae.nuip")]
        vae: PathBuf,
        #[arg(long, default_value = "work/latents.nuil")]
        out: PathBuf,
    },
    /// Train the outpainting diffusion model on encoded latents.
    TrainDiffusion {
        #[arg(long, default_value = "work/latents.nuil")]
        latents: PathBuf,
        #[arg(long, default_value = "work/diffusion.nuip")]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Generate an unbounded scene: latent grid, OBJ mesh, trace, NFE report.
    Generate(GenerateArgs),
    /// Decode a latent grid file to a mesh at a chosen resolution.
    Decode {
        /// Input .nuig latent grid.
        grid: PathBuf,
        #[arg(long, default_value = "work/vae.nuip")]
        vae: PathBuf,
        /// Lattice points per chunk side (0 = chunk size).
        #[arg(long, default_value_t = 0)]
        resolution: usize,
        #[arg(long, default_value_t = 0)]
        parallel: usize,
        #[arg(long, default_value = "work/decoded.obj")]
        out: PathBuf,
    },
    /// Reconstruction metrics on the validation split.
    Eval {
        #[arg(long, default_value = "work/dataset")]
        dataset: PathBuf,
        #[arg(long, default_value = "work/vae.nuip")]
        vae: PathBuf,
        #[arg(long, default_value = "work/metrics.json")]
        out: PathBuf,
    },
    /// Inspect any pipeline file (voxel, latent, grid, checkpoint, dataset).
    Info { path: PathBuf },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "work/vae.nuip")]
    vae: PathBuf,
    #[arg(long, default_value = "work/diffusion.nuip")]
    diffusion: PathBuf,
    #[arg(long, default_value = "work/generated")]
    out: PathBuf,
    /// Scene cell rows (I).
    #[arg(long)]
    rows: Option<usize>,
    /// Scene cell columns (J).
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// "explicit" or "repaint".
    #[arg(long)]
    method: Option<String>,
    /// RePaint resampling repeats.
    #[arg(long)]
    resample_r: Option<usize>,
    /// Inference steps (0 = schedule default).
    #[arg(long)]
    steps: Option<usize>,
    /// Worker threads (0 = logical cores).
    #[arg(long)]
    parallel: Option<usize>,
    /// Decode resolution per chunk side (0 = chunk size).
    #[arg(long)]
    resolution: Option<usize>,
}

fn load_config(path: &Option<PathBuf>) -> vecscene_core::Result<PipelineConfig> {
    let cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    Ok(cfg.normalized())
}

fn real_main() -> vecscene_core::Result<()> {
    let cli = Cli::parse();
    let verbose = cli.verbose;
    let mut log = move |msg: &str| {
        if verbose {
            eprintln!("{msg}");
        }
    };
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Synth { out } => {
            pipeline::run_synth(&cfg, &out, &mut log)?;
        }
        Command::Preprocess { input, out, resolution, ground_level } => {
            pipeline::run_preprocess(&input, &out, resolution, ground_level, &mut log)?;
        }
        Command::SampleChunks { scenes, out } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&scenes)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "nuiv"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(vecscene_core::Error::invalid(format!(
                    "no .nuiv scenes under {}",
                    scenes.display()
                )));
            }
            pipeline::run_sample_chunks(&cfg, &paths, &out, &mut log)?;
        }
        Command::TrainVae { dataset, out, epochs } => {
            let mut cfg = cfg;
            if let Some(e) = epochs {
                cfg.vae_train.epochs = e;
            }
            pipeline::run_train_vae(&cfg, &dataset, &out, &mut log)?;
        }
        Command::EncodeLatents { dataset, vae, out } => {
            pipeline::run_encode_latents(&cfg, &dataset, &vae, &out, &mut log)?;
        }
        Command::TrainDiffusion { latents, out, epochs } => {
            let mut cfg = cfg;
            if let Some(e) = epochs {
                cfg.diffusion_train.epochs = e;
            }
            pipeline::run_train_diffusion(&cfg, &latents, &out, &mut log)?;
        }
        Command::Generate(args) => {
            let mut cfg = cfg;
            if let Some(v) = args.rows {
                cfg.generate.rows = v;
            }
            if let Some(v) = args.cols {
                cfg.generate.cols = v;
            }
            if let Some(v) = args.seed {
                cfg.generate.seed = v;
            }
            if let Some(v) = args.method {
                cfg.generate.method = v;
            }
            if let Some(v) = args.resample_r {
                cfg.generate.resample_r = v;
            }
            if let Some(v) = args.steps {
                cfg.generate.steps = v;
            }
            if let Some(v) = args.parallel {
                cfg.generate.parallel = v;
            }
            if let Some(v) = args.resolution {
                cfg.generate.resolution = v;
            }
            let outputs =
                pipeline::run_generate(&cfg, &args.vae, &args.diffusion, &args.out, &mut log)?;
            println!("{}", outputs.grid_path.display());
            println!("{}", outputs.obj_path.display());
            println!("{}", outputs.trace_path.display());
        }
        Command::Decode { grid, vae, resolution, parallel, out } => {
            let res = if resolution == 0 { cfg.dataset.chunk_size } else { resolution };
            let workers = if parallel == 0 {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
            } else {
                parallel
            };
            pipeline::run_decode(&grid, &vae, res, workers, &out, &mut log)?;
            println!("{}", out.display());
        }
        Command::Eval { dataset, vae, out } => {
            let report = pipeline::run_eval(&cfg, &dataset, &vae, &out, &mut log)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Info { path } => {
            println!("{}", pipeline::run_info(&path)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
