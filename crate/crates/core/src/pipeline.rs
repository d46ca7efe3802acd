//! End-to-end orchestration used by the CLI and the acceptance suite:
//! scene synthesis, preprocessing, chunk sampling, both training stages,
//! latent encoding, generation, decoding, and evaluation, all through the
//! on-disk formats.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::chunks::dataset::{split_of, DatasetReader, Split};
use crate::chunks::{sample_chunk_point_cloud, ChunkSample, QuadChunk};
use crate::config::PipelineConfig;
use crate::diffusion::denoiser::DenoiserConfig;
use crate::diffusion::sample::{DiffusionSampler, OutpaintMethod, TrainedEps};
use crate::diffusion::train::{latents_to_quads, train_diffusion, DiffusionModel};
use crate::diffusion::{build_schedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::eval::{chamfer_f, eval_query_split, ChunkMetrics, MetricReport, NfeReport};
use crate::generate::{
    antidiagonal_generate, decode_scene, save_latent_grid, SceneLatentGrid, WriteBack,
};
use crate::nn::checkpoint;
use crate::rng::Rng;
use crate::toy::{synth_scene_valid, SceneSpec};
use crate::vae::latents::{load_latents, save_latents};
use crate::vae::train::{encode_dataset, evaluate_vae, train_vae};
use crate::vae::{LatentSet, VaeConfig, VecsetVae};
use crate::voxel::{
    detect_ground_level, fix_ground, flood_fill_solid, nuiv, obj, occupancy_mesh,
    sample_surface_points, voxelize_mesh,
};

pub type Logger<'a> = &'a mut dyn FnMut(&str);

pub fn null_logger() -> impl FnMut(&str) {
    |_: &str| {}
}

// ----- synth -----

/// Generates the configured toy scenes into `dir` as NUIV files plus a
/// specs.json manifest. Seeds regenerate deterministically until every
/// scene has valid sample windows.
pub fn run_synth(cfg: &PipelineConfig, dir: &Path, log: Logger) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut specs = Vec::new();
    let mut paths = Vec::new();
    let mut idx = 0usize;
    for &style in &cfg.scene.styles {
        for k in 0..cfg.scene.scenes_per_style {
            let seed = Rng::derive(cfg.scene.seed, &[0x5CE, style as u64, k as u64]);
            let (grid, used_seed) = synth_scene_valid(
                seed,
                style,
                cfg.scene.dims,
                cfg.dataset.chunk_size,
                cfg.dataset.depth_threshold,
            )?;
            let path = dir.join(format!("scene_{idx:03}_{}.nuiv", style.name()));
            nuiv::save_nuiv(&grid, &path)?;
            log(&format!(
                "scene {idx}: style {} dims {:?} seed {used_seed} occupied {}",
                style.name(),
                cfg.scene.dims,
                grid.occupied_count()
            ));
            specs.push(SceneSpec { seed: used_seed, style, dims: cfg.scene.dims });
            paths.push(path);
            idx += 1;
        }
    }
    std::fs::write(dir.join("specs.json"), serde_json::to_string_pretty(&specs)?)?;
    Ok(paths)
}

// ----- preprocess -----

/// Voxelizes a mesh (or re-reads a voxel file), flood-fills it solid, and
/// enforces the uniform ground slab. `ground_level` of None auto-detects.
pub fn run_preprocess(
    input: &Path,
    output: &Path,
    resolution: usize,
    ground_level: Option<usize>,
    log: Logger,
) -> Result<()> {
    let ext = input.extension().and_then(|e| e.to_str()).unwrap_or("");
    let grid = match ext {
        "obj" => {
            let mesh = obj::load_obj(input)?;
            log(&format!(
                "voxelizing {} triangles at resolution {resolution}",
                mesh.triangles.len()
            ));
            voxelize_mesh(&mesh, resolution)?
        }
        _ => nuiv::load_nuiv(input)?,
    };
    let filled = flood_fill_solid(&grid);
    log(&format!(
        "flood fill added {} voxels",
        filled.occupied_count() - grid.occupied_count()
    ));
    let level = match ground_level {
        Some(l) => l,
        None => detect_ground_level(&filled)
            .ok_or_else(|| Error::invalid("no ground level detected; pass one explicitly"))?
            .max(crate::voxel::GROUND_THICKNESS),
    };
    let grounded = fix_ground(&filled, level)?;
    log(&format!("ground fixed at level {level}"));
    nuiv::save_nuiv(&grounded, output)?;
    Ok(())
}

// ----- sample-chunks -----

pub fn run_sample_chunks(
    cfg: &PipelineConfig,
    scene_paths: &[PathBuf],
    dataset_dir: &Path,
    log: Logger,
) -> Result<crate::toy::DatasetBuildReport> {
    let mut scenes = Vec::with_capacity(scene_paths.len());
    for p in scene_paths {
        scenes.push(nuiv::load_nuiv(p)?);
    }
    let report = crate::toy::build_dataset(
        &scenes,
        cfg.dataset.quads_per_scene,
        cfg.dataset.chunk_size,
        cfg.dataset.depth_threshold,
        dataset_dir,
    )?;
    log(&format!(
        "dataset: {} quads ({} train / {} val) from {} scenes",
        report.total,
        report.train,
        report.val,
        scenes.len()
    ));
    Ok(report)
}

// ----- checkpoint sidecars -----

pub fn save_vae(vae: &VecsetVae<f32>, path: &Path) -> Result<()> {
    checkpoint::save(&vae.params, path)?;
    std::fs::write(
        path.with_extension("json"),
        serde_json::to_string_pretty(vae.cfg())?,
    )?;
    Ok(())
}

pub fn load_vae(path: &Path) -> Result<VecsetVae<f32>> {
    let cfg: VaeConfig =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
    let mut vae = VecsetVae::new(cfg, 0)?;
    let loaded = checkpoint::load::<f32>(path)?;
    checkpoint::restore_into(&mut vae.params, &loaded)?;
    Ok(vae)
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DiffusionSidecar {
    pub denoiser: DenoiserConfig,
    pub t_max: usize,
    pub inference_steps: usize,
}

pub fn save_diffusion(dm: &DiffusionModel, inference_steps: usize, path: &Path) -> Result<()> {
    checkpoint::save(&dm.params, path)?;
    let side = DiffusionSidecar {
        denoiser: dm.model.cfg.clone(),
        t_max: dm.schedule.t_max,
        inference_steps,
    };
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn load_diffusion(path: &Path) -> Result<(DiffusionModel, usize)> {
    let side: DiffusionSidecar =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
    let schedule = build_schedule(side.t_max, ScheduleKind::Linear)?;
    let mut dm = DiffusionModel::new(side.denoiser, schedule, 0);
    let loaded = checkpoint::load::<f32>(path)?;
    checkpoint::restore_into(&mut dm.params, &loaded)?;
    Ok((dm, side.inference_steps))
}

// ----- train-vae -----

pub fn load_dataset_quads(dataset_dir: &Path) -> Result<(Vec<QuadChunk>, Vec<u32>)> {
    let mut reader = DatasetReader::open(dataset_dir)?;
    let mut quads = Vec::with_capacity(reader.len());
    for i in 0..reader.len() {
        quads.push(reader.get(i)?);
    }
    let scenes = reader.scene_ids().to_vec();
    Ok((quads, scenes))
}

pub fn train_split_chunks(quads: &[QuadChunk]) -> (Vec<ChunkSample>, Vec<ChunkSample>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for quad in quads {
        let dst = match split_of(quad.origin) {
            Split::Train => &mut train,
            Split::Val => &mut val,
        };
        dst.extend(quad.chunks.iter().cloned());
    }
    (train, val)
}

pub fn run_train_vae(
    cfg: &PipelineConfig,
    dataset_dir: &Path,
    out: &Path,
    log: Logger,
) -> Result<VecsetVae<f32>> {
    let (quads, _) = load_dataset_quads(dataset_dir)?;
    let (train_chunks, val_chunks) = train_split_chunks(&quads);
    if train_chunks.is_empty() {
        return Err(Error::invalid("dataset has no training chunks"));
    }
    log(&format!(
        "training VAE on {} chunks ({} validation)",
        train_chunks.len(),
        val_chunks.len()
    ));
    let mut vae = VecsetVae::<f32>::new(cfg.vae.clone(), cfg.vae_train.seed)?;
    let total_steps = cfg.vae_train.epochs
        * train_chunks.len().div_ceil(cfg.vae_train.batch_size).max(1);
    let started = Instant::now();
    let log_every = (total_steps / 10).max(1);
    train_vae(&mut vae, &train_chunks, &cfg.vae_train, |info| {
        if info.step % log_every == 0 {
            log(&format!(
                "vae step {}/{total_steps} loss {:.4} (ce {:.4} kl {:.2} emb {:.4} h {:.4}) [{:.0}s]",
                info.step,
                info.parts.total,
                info.parts.ce,
                info.parts.kl,
                info.parts.emb,
                info.parts.height,
                started.elapsed().as_secs_f64()
            ));
        }
    })?;
    if !val_chunks.is_empty() {
        let probe = val_chunks.len().min(16);
        let (iou, mae) = evaluate_vae(&vae, &val_chunks[..probe], 512, cfg.eval.seed)?;
        log(&format!("vae validation probe: iou {iou:.3} height mae {mae:.2} vox"));
    }
    save_vae(&vae, out)?;
    Ok(vae)
}

// ----- encode-latents -----

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct LatentMeta {
    pub record: usize,
    pub scene: u32,
    pub origin: [usize; 2],
    pub split: String,
}

pub fn run_encode_latents(
    cfg: &PipelineConfig,
    dataset_dir: &Path,
    vae_path: &Path,
    out: &Path,
    log: Logger,
) -> Result<Vec<LatentSet>> {
    let vae = load_vae(vae_path)?;
    let (quads, scenes) = load_dataset_quads(dataset_dir)?;
    let latents = encode_dataset(&vae, &quads, cfg.eval.seed, cfg.vae_train.workers)?;
    save_latents(&latents, out)?;
    let meta: Vec<LatentMeta> = quads
        .iter()
        .zip(&scenes)
        .enumerate()
        .map(|(i, (q, &scene))| LatentMeta {
            record: i,
            scene,
            origin: [q.origin.0, q.origin.1],
            split: match split_of(q.origin) {
                Split::Train => "train".into(),
                Split::Val => "val".into(),
            },
        })
        .collect();
    std::fs::write(out.with_extension("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    log(&format!("encoded {} latent sets ({} quads)", latents.len(), quads.len()));
    Ok(latents)
}

// ----- train-diffusion -----

pub fn run_train_diffusion(
    cfg: &PipelineConfig,
    latents_path: &Path,
    out: &Path,
    log: Logger,
) -> Result<DiffusionModel> {
    let latents = load_latents(latents_path)?;
    let all_quads = latents_to_quads(&latents)?;
    // restrict to training-split quads when metadata is present
    let meta_path = latents_path.with_extension("meta.json");
    let quads = if meta_path.exists() {
        let meta: Vec<LatentMeta> = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
        all_quads
            .iter()
            .zip(&meta)
            .filter(|(_, m)| m.split == "train")
            .map(|(q, _)| q.clone())
            .collect()
    } else {
        all_quads
    };
    if quads.is_empty() {
        return Err(Error::invalid("no training quads for diffusion"));
    }
    log(&format!("training diffusion on {} quads", quads.len()));
    let schedule = build_schedule(cfg.diffusion.t_max, ScheduleKind::Linear)?;
    let mut dm = DiffusionModel::new(
        cfg.diffusion.denoiser.clone(),
        schedule,
        cfg.diffusion_train.seed,
    );
    let total_steps =
        cfg.diffusion_train.epochs * quads.len().div_ceil(cfg.diffusion_train.batch_size).max(1);
    let log_every = (total_steps / 10).max(1);
    let started = Instant::now();
    train_diffusion(&mut dm, &quads, &cfg.diffusion_train, |info| {
        if info.step % log_every == 0 {
            log(&format!(
                "diffusion step {}/{total_steps} loss {:.4} [{:.0}s]",
                info.step,
                info.loss,
                started.elapsed().as_secs_f64()
            ));
        }
    })?;
    save_diffusion(&dm, cfg.diffusion.inference_steps, out)?;
    Ok(dm)
}

// ----- generate -----

pub struct GenerateOutputs {
    pub grid_path: PathBuf,
    pub obj_path: PathBuf,
    pub trace_path: PathBuf,
    pub nfe_path: PathBuf,
    pub warnings: Vec<String>,
}

pub fn parse_method(method: &str, resample_r: usize) -> Result<OutpaintMethod> {
    match method {
        "explicit" => Ok(OutpaintMethod::Explicit),
        "repaint" => Ok(OutpaintMethod::Repaint { resample_r }),
        other => Err(Error::invalid(format!(
            "unknown method {other:?} (expected explicit or repaint)"
        ))),
    }
}

/// Full generation: wavefront sampling of the latent grid, denormalization
/// into VAE space, file emission, and scene decoding.
pub fn run_generate(
    cfg: &PipelineConfig,
    vae_path: &Path,
    diffusion_path: &Path,
    out_dir: &Path,
    log: Logger,
) -> Result<GenerateOutputs> {
    std::fs::create_dir_all(out_dir)?;
    let vae = load_vae(vae_path)?;
    let (dm, default_steps) = load_diffusion(diffusion_path)?;
    let steps = if cfg.generate.steps == 0 { default_steps } else { cfg.generate.steps };
    let method = parse_method(&cfg.generate.method, cfg.generate.resample_r)?;
    let eps = TrainedEps { model: &dm.model, params: &dm.params };
    let sampler = DiffusionSampler {
        eps: &eps,
        schedule: &dm.schedule,
        steps,
        method,
        latent_count: dm.model.cfg.latent_count,
        channels: dm.model.cfg.channels,
    };
    let write_back = if cfg.generate.overwrite_conditioned {
        WriteBack::Overwrite
    } else {
        WriteBack::PreserveConditioned
    };
    let workers = if cfg.generate.parallel == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        cfg.generate.parallel
    };
    log(&format!(
        "generating {}x{} cells with {} ({} steps, {} workers)",
        cfg.generate.rows,
        cfg.generate.cols,
        method.name(),
        steps,
        workers
    ));
    let t_gen = Instant::now();
    let (grid_norm, trace, schedule_log) = antidiagonal_generate(
        cfg.generate.rows,
        cfg.generate.cols,
        &sampler,
        cfg.generate.seed,
        workers,
        write_back,
    )?;
    let embedding_secs = t_gen.elapsed().as_secs_f64();
    schedule_log.audit()?;

    // denormalize into VAE latent space so the grid file is self-contained
    let mut grid = SceneLatentGrid::new(
        grid_norm.rows,
        grid_norm.cols,
        grid_norm.latent_count,
        grid_norm.channels,
    )?;
    for i in 0..grid_norm.rows {
        for j in 0..grid_norm.cols {
            let denorm = dm.denormalize_latent(&grid_norm.cell_latent(i, j));
            grid.set_cell(i, j, denorm.z);
        }
    }

    let grid_path = out_dir.join("scene.nuig");
    save_latent_grid(&grid, &grid_path)?;
    let trace_path = out_dir.join("trace.txt");
    trace.save(&trace_path)?;

    let t_dec = Instant::now();
    let scene = decode_scene(&grid, &vae, cfg.generate.resolution, workers)?;
    let decode_secs = t_dec.elapsed().as_secs_f64();
    for w in &scene.warnings {
        log(&format!("warning: {w}"));
    }
    let obj_path = out_dir.join("scene.obj");
    obj::save_obj(&scene.mesh, &obj_path)?;
    nuiv::save_nuiv(&scene.grid, &out_dir.join("scene.nuiv"))?;

    let report = NfeReport {
        method: method.name(),
        quads: trace.entries.len(),
        inference_steps: steps,
        resample_r: match method {
            OutpaintMethod::Repaint { resample_r } => resample_r,
            _ => 1,
        },
        denoiser_calls: trace.total_calls(),
        embedding_gen_seconds: embedding_secs,
        occupancy_decode_seconds: decode_secs,
    };
    let nfe_path = out_dir.join("nfe.json");
    std::fs::write(&nfe_path, serde_json::to_string_pretty(&report)?)?;
    log(&format!(
        "generated {} quads, {} denoiser calls, {:.2}s embedding + {:.2}s decode",
        report.quads, report.denoiser_calls, embedding_secs, decode_secs
    ));
    Ok(GenerateOutputs {
        grid_path,
        obj_path,
        trace_path,
        nfe_path,
        warnings: scene.warnings,
    })
}

// ----- decode -----

pub fn run_decode(
    grid_path: &Path,
    vae_path: &Path,
    resolution: usize,
    workers: usize,
    out_obj: &Path,
    log: Logger,
) -> Result<()> {
    let vae = load_vae(vae_path)?;
    let grid = crate::generate::load_latent_grid(grid_path)?;
    let scene = decode_scene(&grid, &vae, resolution, workers)?;
    for w in &scene.warnings {
        log(&format!("warning: {w}"));
    }
    obj::save_obj(&scene.mesh, out_obj)?;
    log(&format!(
        "decoded {}x{} cells at resolution {resolution}: {} vertices",
        grid.rows,
        grid.cols,
        scene.mesh.vertices.len()
    ));
    Ok(())
}

// ----- eval -----

pub fn run_eval(
    cfg: &PipelineConfig,
    dataset_dir: &Path,
    vae_path: &Path,
    out_json: &Path,
    log: Logger,
) -> Result<MetricReport> {
    let vae = load_vae(vae_path)?;
    let (quads, _) = load_dataset_quads(dataset_dir)?;
    let (_, val_chunks) = train_split_chunks(&quads);
    let mut chunks = val_chunks;
    if chunks.is_empty() {
        return Err(Error::invalid("dataset has no validation chunks"));
    }
    if cfg.eval.max_chunks > 0 && chunks.len() > cfg.eval.max_chunks {
        chunks.truncate(cfg.eval.max_chunks);
    }
    let chunk_size = cfg.dataset.chunk_size;
    let threshold = 2.0 / chunk_size as f64;
    let mut per_chunk = Vec::with_capacity(chunks.len());
    let mut inter = 0usize;
    let mut union = 0usize;
    let (mut cd_sum, mut f_sum) = (0.0, 0.0);
    for (ci, chunk) in chunks.iter().enumerate() {
        let mut rng = Rng::new(Rng::derive(cfg.eval.seed, &[0xEAA1, ci as u64]));
        let points = sample_chunk_point_cloud(chunk, vae.cfg().n_points, &mut rng);
        let latent = vae.encode(&points, None)?;

        // IOU on the stratified split
        let batch = eval_query_split(chunk, cfg.eval.queries_per_chunk, &mut rng);
        let logits = vae.occupancy_logits(&latent, &batch.coords_norm)?;
        let mut c_inter = 0usize;
        let mut c_union = 0usize;
        for (l, &gt) in logits.iter().zip(&batch.labels) {
            let pred = *l > 0.0;
            if pred && gt {
                c_inter += 1;
            }
            if pred || gt {
                c_union += 1;
            }
        }
        inter += c_inter;
        union += c_union;

        // CD / F-Score between ground-truth and reconstructed chunk meshes,
        // in normalized units (voxel / chunk)
        let gt_mesh = occupancy_mesh(&chunk.occ)?;
        let decoded = vae.decode_chunk(&latent, chunk_size)?;
        let (cd, f) = if gt_mesh.is_empty() || decoded.mesh.is_empty() {
            (f64::NAN, 0.0)
        } else {
            let scale = 2.0 / chunk_size as f32;
            let gt_pts: Vec<[f32; 3]> =
                sample_surface_points(&gt_mesh, cfg.eval.surface_points, &mut rng)?
                    .into_iter()
                    .map(|p| [p[0] * scale, p[1] * scale, p[2] * scale])
                    .collect();
            let rec_pts: Vec<[f32; 3]> =
                sample_surface_points(&decoded.mesh, cfg.eval.surface_points, &mut rng)?
                    .into_iter()
                    .map(|p| [p[0] * scale, p[1] * scale, p[2] * scale])
                    .collect();
            chamfer_f(&gt_pts, &rec_pts, threshold)?
        };
        if cd.is_finite() {
            cd_sum += cd;
            f_sum += f;
        }
        let h_norm = vae.predict_height(&latent)?;
        let h_vox = chunk_size as f64 * (h_norm + 1.0) / 2.0;
        per_chunk.push(ChunkMetrics {
            index: ci,
            iou: if c_union == 0 { 1.0 } else { c_inter as f64 / c_union as f64 },
            cd,
            f_score: f,
            height_error_vox: (h_vox - chunk.h_vox as f64).abs(),
        });
    }
    let report = MetricReport {
        iou: if union == 0 { 1.0 } else { inter as f64 / union as f64 },
        cd: cd_sum / chunks.len() as f64,
        f_score: f_sum / chunks.len() as f64,
        eval_queries_per_chunk: cfg.eval.queries_per_chunk,
        surface_points_per_chunk: cfg.eval.surface_points,
        f_score_threshold: threshold,
        cd_distance: "unsquared-euclidean".into(),
        f_score_comparison: "inclusive".into(),
        chunk_count: chunks.len(),
        per_chunk,
    };
    std::fs::write(out_json, serde_json::to_string_pretty(&report)?)?;
    log(&format!(
        "eval over {} chunks: iou {:.3} cd {:.4} f {:.3}",
        report.chunk_count, report.iou, report.cd, report.f_score
    ));
    Ok(report)
}

// ----- info -----

pub fn run_info(path: &Path) -> Result<String> {
    if path.is_dir() {
        let reader = DatasetReader::open(path)?;
        return Ok(format!(
            "chunk dataset: {} records, chunk size {}",
            reader.len(),
            reader.chunk_size()
        ));
    }
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        let mut f = std::fs::File::open(path)?;
        f.read_exact(&mut magic)?;
    }
    match &magic {
        b"NUIV" => {
            let (nx, ny, nz) = nuiv::read_nuiv_dims(path)?;
            Ok(format!("voxel grid: dims {nx} x {ny} x {nz}"))
        }
        b"NUIL" => {
            let (count, v, c) = crate::vae::latents::read_latents_header(path)?;
            Ok(format!("latent file: {count} sets of {v} x {c}"))
        }
        b"NUIG" => {
            let grid = crate::generate::load_latent_grid(path)?;
            Ok(format!(
                "latent grid: {} x {} cells of {} x {}",
                grid.rows, grid.cols, grid.latent_count, grid.channels
            ))
        }
        b"NUIP" => {
            let store = checkpoint::load::<f32>(path)?;
            let params = store.param_count();
            Ok(format!(
                "checkpoint: {} tensors, {} trainable parameters",
                store.len(),
                params
            ))
        }
        other => Err(Error::format(format!(
            "unknown magic {:?}",
            String::from_utf8_lossy(other)
        ))),
    }
}

/// Convenience used by tests: run the whole pipeline inside `root` and
/// return the latent grid path.
pub fn run_full_pipeline(cfg: &PipelineConfig, root: &Path, log: Logger) -> Result<GenerateOutputs> {
    let scenes_dir = root.join("scenes");
    let dataset_dir = root.join("dataset");
    let vae_path = root.join("vae.nuip");
    let latents_path = root.join("latents.nuil");
    let diff_path = root.join("diffusion.nuip");
    let out_dir = root.join("generated");
    let scene_paths = run_synth(cfg, &scenes_dir, log)?;
    run_sample_chunks(cfg, &scene_paths, &dataset_dir, log)?;
    run_train_vae(cfg, &dataset_dir, &vae_path, log)?;
    run_encode_latents(cfg, &dataset_dir, &vae_path, &latents_path, log)?;
    run_train_diffusion(cfg, &latents_path, &diff_path, log)?;
    let outputs = run_generate(cfg, &vae_path, &diff_path, &out_dir, log)?;
    run_eval(cfg, &dataset_dir, &vae_path, &root.join("metrics.json"), log)?;
    Ok(outputs)
}
