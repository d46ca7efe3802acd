use vecscene_core::config::PipelineConfig;
use vecscene_core::pipeline::*;
use vecscene_core::vae::train::*;
use vecscene_core::vae::VecsetVae;

fn main() {
    let height_pick: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(55);
    let steps: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(300);
    let mut cfg = PipelineConfig::default();
    match std::env::args().nth(3).unwrap_or_default().as_str() {
        "u4" => { cfg.vae.upsample = 4; }
        "u8" => { cfg.vae.upsample = 8; }
        "hd128" => { cfg.vae.head_dim = 128; }
        "u4hd" => { cfg.vae.upsample = 4; cfg.vae.head_dim = 128; }
        "u8hd" => { cfg.vae.upsample = 8; cfg.vae.head_dim = 128; }
        _ => {}
    }
    let cfg = cfg.normalized();
    let dir = std::env::temp_dir().join("vecscene_calib");
    let (quads, _) = load_dataset_quads(&dir.join("dataset")).unwrap();
    let (train_chunks, _) = train_split_chunks(&quads);
    // height_pick doubles as the fit-set size when the 4th arg is "multi"
    let multi = std::env::args().nth(4).unwrap_or_default() == "multi";
    let chunks: Vec<_> = if multi {
        train_chunks.iter().take(height_pick).cloned().collect()
    } else {
        vec![train_chunks
            .iter()
            .min_by_key(|c| (c.h_vox as i64 - height_pick as i64).abs())
            .unwrap()
            .clone()]
    };
    eprintln!("fitting {} chunks", chunks.len());
    let mut vae = VecsetVae::<f32>::new(cfg.vae.clone(), 7).unwrap();
    let batch = chunks.len().min(8);
    let tc = VaeTrainConfig {
        epochs: (steps * batch).div_ceil(chunks.len()),
        batch_size: batch,
        queries_per_chunk: 512,
        lr: 1e-3,
        workers: 2,
        ..Default::default()
    };
    let t = std::time::Instant::now();
    let mut last = 0.0;
    train_vae(&mut vae, &chunks, &tc, |info| { last = info.parts.ce; }).unwrap();
    let (iou, mae) = evaluate_vae(&vae, &chunks, 2048, 5).unwrap();
    eprintln!("after {steps} steps: ce {last:.4} iou {iou:.4} mae {mae:.2} ({:.0}s)", t.elapsed().as_secs_f64());
}
