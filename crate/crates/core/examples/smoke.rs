use vecscene_core::config::PipelineConfig;
use vecscene_core::pipeline::run_full_pipeline;

fn main() {
    let mut cfg = PipelineConfig::default();
    cfg.scene.dims = [72, 96, 72];
    cfg.scene.scenes_per_style = 1;
    cfg.dataset.chunk_size = 16;
    cfg.dataset.quads_per_scene = 24;
    cfg.vae.latent_count = 4;
    cfg.vae.channels = 16;
    cfg.vae.n_points = 256;
    cfg.vae.decoder_layers = 2;
    cfg.vae.n_freq = 6;
    cfg.vae_train.epochs = 1;
    cfg.vae_train.batch_size = 16;
    cfg.vae_train.queries_per_chunk = 256;
    cfg.vae_train.workers = 2;
    cfg.diffusion.t_max = 200;
    cfg.diffusion.inference_steps = 20;
    cfg.diffusion.denoiser.d_model = 32;
    cfg.diffusion.denoiser.layers = 3;
    cfg.diffusion.denoiser.pe_dim = 8;
    cfg.diffusion_train.epochs = 2;
    cfg.diffusion_train.batch_size = 16;
    cfg.diffusion_train.workers = 2;
    cfg.generate.rows = 3;
    cfg.generate.cols = 3;
    cfg.generate.parallel = 2;
    cfg.eval.queries_per_chunk = 512;
    cfg.eval.surface_points = 512;
    cfg.eval.max_chunks = 8;
    let cfg = cfg.normalized();
    let dir = std::env::temp_dir().join("vecscene_smoke");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let t = std::time::Instant::now();
    let mut log = |m: &str| eprintln!("[{:6.1}s] {m}", t.elapsed().as_secs_f64());
    let out = run_full_pipeline(&cfg, &dir, &mut log).unwrap();
    eprintln!("done in {:.1}s -> {}", t.elapsed().as_secs_f64(), out.grid_path.display());
}
