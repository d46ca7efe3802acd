use vecscene_core::config::PipelineConfig;
use vecscene_core::pipeline::*;
use vecscene_core::vae::train::*;
use vecscene_core::vae::VecsetVae;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let segments: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let epochs_per_segment: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let mut cfg = PipelineConfig::default(); // towers+blocks, chunk 32, V=8, c=32
    cfg.vae_train.workers = 2;
    let cfg = cfg.normalized();
    let dir = std::env::temp_dir().join("vecscene_calib");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let t = std::time::Instant::now();
    let mut log = |m: &str| eprintln!("[{:6.1}s] {m}", t.elapsed().as_secs_f64());
    let scenes = run_synth(&cfg, &dir.join("scenes"), &mut log).unwrap();
    run_sample_chunks(&cfg, &scenes, &dir.join("dataset"), &mut log).unwrap();
    let (quads, _) = load_dataset_quads(&dir.join("dataset")).unwrap();
    let (train_chunks, val_chunks) = train_split_chunks(&quads);
    eprintln!("train {} chunks / val {} chunks", train_chunks.len(), val_chunks.len());
    let mut vae = VecsetVae::<f32>::new(cfg.vae.clone(), cfg.vae_train.seed).unwrap();
    let probe: Vec<_> = val_chunks.iter().take(12).cloned().collect();
    let mut total_steps = 0usize;
    for seg in 0..segments {
        let mut tc = cfg.vae_train.clone();
        tc.epochs = epochs_per_segment;
        tc.seed = cfg.vae_train.seed + 1000 * seg as u64;
        let mut last = 0.0;
        train_vae(&mut vae, &train_chunks, &tc, |info| { last = info.parts.total; total_steps = total_steps.max(info.step); }).unwrap();
        let (iou, mae) = evaluate_vae(&vae, &probe, 1024, 5).unwrap();
        eprintln!("[{:6.1}s] seg {} (+{} epochs) loss {:.4} | probe iou {:.4} mae {:.2}",
            t.elapsed().as_secs_f64(), seg, epochs_per_segment, last, iou, mae);
    }
    let (iou, mae) = evaluate_vae(&vae, &val_chunks, 2048, 5).unwrap();
    eprintln!("[{:6.1}s] FINAL val iou {iou:.4} mae {mae:.2} over {} chunks", t.elapsed().as_secs_f64(), val_chunks.len());
}
