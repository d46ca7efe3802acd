use vecscene_core::config::PipelineConfig;
use vecscene_core::pipeline::*;
use vecscene_core::vae::train::*;
use vecscene_core::vae::VecsetVae;

fn main() {
    let variant = std::env::args().nth(1).unwrap_or_default();
    let epochs: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(8);
    let mut cfg = PipelineConfig::default();
    cfg.vae_train.workers = 2;
    match variant.as_str() {
        "v0" => {}
        "v1" => { cfg.vae.upsample = 4; }
        "v2" => { cfg.vae.lambda_kl = 1e-4; cfg.vae.lambda_emb = 0.3; }
        "v3" => { cfg.vae_train.queries_per_chunk = 1024; }
        "v4" => { cfg.vae_train.lr = 2e-3; }
        "v5" => { cfg.vae.decoder_layers = 8; }
        "v6" => { cfg.vae.upsample = 4; cfg.vae.lambda_kl = 1e-4; cfg.vae_train.lr = 2e-3; }
        "dense" => {
            cfg.dataset.quads_per_scene = 160;
            cfg.vae.n_points = 512;
            cfg.vae_train.queries_per_chunk = 768;
        }
        _ => panic!("unknown variant"),
    }
    cfg.vae_train.epochs = epochs;
    let cfg = cfg.normalized();
    let dir = std::env::temp_dir().join("vecscene_calib"); // reuse dataset
    if !dir.join("dataset").exists() {
        std::fs::create_dir_all(&dir).unwrap();
        let mut log = |_: &str| {};
        let scenes = run_synth(&cfg, &dir.join("scenes"), &mut log).unwrap();
        run_sample_chunks(&cfg, &scenes, &dir.join("dataset"), &mut log).unwrap();
    }
    let (quads, _) = load_dataset_quads(&dir.join("dataset")).unwrap();
    let (train_chunks, val_chunks) = train_split_chunks(&quads);
    let t = std::time::Instant::now();
    let mut vae = VecsetVae::<f32>::new(cfg.vae.clone(), cfg.vae_train.seed).unwrap();
    let mut last_parts = None;
    train_vae(&mut vae, &train_chunks, &cfg.vae_train, |info| { last_parts = Some(info.parts); }).unwrap();
    let probe: Vec<_> = val_chunks.iter().take(16).cloned().collect();
    let (iou, mae) = evaluate_vae(&vae, &probe, 1024, 5).unwrap();
    let train_probe: Vec<_> = train_chunks.iter().step_by(37).take(16).cloned().collect();
    let (train_iou, train_mae) = evaluate_vae(&vae, &train_probe, 1024, 5).unwrap();
    eprintln!("  train-set probe: iou {train_iou:.4} mae {train_mae:.2}");
    // posterior scale diagnostic
    let mut sig = 0.0f64; let mut n = 0;
    for ch in probe.iter().take(4) {
        let mut rng = vecscene_core::rng::Rng::new(3);
        let pts = vecscene_core::chunks::sample_chunk_point_cloud(ch, cfg.vae.n_points, &mut rng);
        let l = vae.encode(&pts, None).unwrap();
        if let Some((_, lv)) = &l.moments {
            for &v in lv.data() { sig += ((v as f64) / 2.0).exp(); n += 1; }
        }
    }
    let p = last_parts.unwrap();
    eprintln!("VARIANT {variant}: iou {iou:.4} mae {mae:.2} | ce {:.4} emb {:.4} h {:.4} | mean sigma {:.3} | {:.0}s",
        p.ce, p.emb, p.height, sig / n.max(1) as f64, t.elapsed().as_secs_f64());

    // stratified breakdown over validation chunks
    let mut strata = [[0usize; 2]; 4]; // [stratum][correct, total]
    let mut mu_mag = 0.0f64;
    let mut mu_n = 0usize;
    let mut by_height: Vec<(usize, f64)> = Vec::new();
    for (ci, ch) in val_chunks.iter().enumerate().take(24) {
        let mut rng = vecscene_core::rng::Rng::new(1000 + ci as u64);
        let pts = vecscene_core::chunks::sample_chunk_point_cloud(ch, cfg.vae.n_points, &mut rng);
        let latent = vae.encode(&pts, None).unwrap();
        if let Some((m, _)) = &latent.moments {
            for &v in m.data() { mu_mag += (v as f64).abs(); mu_n += 1; }
        }
        let batch = vecscene_core::eval::eval_query_split(ch, 1024, &mut rng);
        let logits = vae.occupancy_logits(&latent, &batch.coords_norm).unwrap();
        let q = 1024 / 4;
        let mut inter = 0; let mut uni = 0;
        for (k, (l, &gt)) in logits.iter().zip(&batch.labels).enumerate() {
            let pred = *l > 0.0;
            let stratum = if k < q { 0 } else if k < 2 * q { 1 } else if pred == gt && gt { 2 } else { 2 };
            let sidx = if k < q { 0usize } else if k < 2*q { 1 } else if gt { 2 } else { 3 };
            let _ = stratum;
            strata[sidx][1] += 1;
            if pred == gt { strata[sidx][0] += 1; }
            if pred && gt { inter += 1; }
            if pred || gt { uni += 1; }
        }
        by_height.push((ch.h_vox, if uni == 0 { 1.0 } else { inter as f64 / uni as f64 }));
    }
    eprintln!("  strata acc: occ-vol {:.3} empty-vol {:.3} near-occ {:.3} near-empty {:.3} | mean|mu| {:.3}",
        strata[0][0] as f64 / strata[0][1].max(1) as f64,
        strata[1][0] as f64 / strata[1][1].max(1) as f64,
        strata[2][0] as f64 / strata[2][1].max(1) as f64,
        strata[3][0] as f64 / strata[3][1].max(1) as f64,
        mu_mag / mu_n.max(1) as f64);
    by_height.sort_by_key(|&(h, _)| h);
    let show: Vec<String> = by_height.iter().map(|(h, i)| format!("h{h}:{i:.2}")).collect();
    eprintln!("  per-chunk iou by height: {}", show.join(" "));
}

// stratified diagnostic: appended as a second mode
