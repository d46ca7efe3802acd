//! Behavior checks that need a trained chunk VAE: latent separation,
//! height accuracy, reconstruction quality, level-of-detail decoding, and
//! the vector-set upsampling ablation. One compact fixture is trained once
//! and shared by the cheap assertions; the ablation trains a second model
//! with upsampling enabled under the same schedule.

use std::sync::OnceLock;

use vecscene_core::chunks::{sample_chunk_point_cloud, ChunkSample};
use vecscene_core::config::PipelineConfig;
use vecscene_core::pipeline::{load_dataset_quads, run_sample_chunks, run_synth, train_split_chunks};
use vecscene_core::rng::Rng;
use vecscene_core::vae::train::{evaluate_vae, train_vae, VaeTrainConfig};
use vecscene_core::vae::{consistency_loss, VaeConfig, VecsetVae};

struct Fixture {
    vae: VecsetVae<f32>,
    vae_upsampled: VecsetVae<f32>,
    train_chunks: Vec<ChunkSample>,
    val_chunks: Vec<ChunkSample>,
    iou_base: f64,
    iou_upsampled: f64,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let mut cfg = PipelineConfig::default();
        cfg.scene.dims = [96, 128, 96];
        cfg.scene.scenes_per_style = 2;
        cfg.dataset.chunk_size = 16;
        cfg.dataset.quads_per_scene = 40;
        cfg.vae.latent_count = 8;
        cfg.vae.channels = 32;
        cfg.vae.n_points = 512;
        cfg.vae.decoder_layers = 3;
        cfg.vae_train.epochs = 8;
        cfg.vae_train.batch_size = 16;
        cfg.vae_train.queries_per_chunk = 384;
        cfg.vae_train.workers = 2;
        let cfg = cfg.normalized();
        let dir = std::env::temp_dir().join("vecscene_trained_fixture");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let mut log = |_: &str| {};
        let scenes = run_synth(&cfg, &dir.join("scenes"), &mut log).unwrap();
        run_sample_chunks(&cfg, &scenes, &dir.join("dataset"), &mut log).unwrap();
        let (quads, _) = load_dataset_quads(&dir.join("dataset")).unwrap();
        let (train_chunks, val_chunks) = train_split_chunks(&quads);
        let _ = std::fs::remove_dir_all(&dir);

        let train = |vae_cfg: VaeConfig, tc: &VaeTrainConfig| {
            let mut vae = VecsetVae::<f32>::new(vae_cfg, tc.seed).unwrap();
            train_vae(&mut vae, &train_chunks, tc, |_| {}).unwrap();
            vae
        };
        let vae = train(cfg.vae.clone(), &cfg.vae_train);
        let mut up_cfg = cfg.vae.clone();
        up_cfg.upsample = 4;
        up_cfg.upsample_layers = 2;
        let vae_upsampled = train(up_cfg, &cfg.vae_train);

        let (iou_base, _) = evaluate_vae(&vae, &val_chunks, 1024, 5).unwrap();
        let (iou_upsampled, _) = evaluate_vae(&vae_upsampled, &val_chunks, 1024, 5).unwrap();
        Fixture { vae, vae_upsampled, train_chunks, val_chunks, iou_base, iou_upsampled }
    })
}

#[test]
fn trained_encoder_separates_chunks() {
    let f = fixture();
    // distinct chunks encode to distinct means; two point samples of the
    // same chunk stay closer than samples of different chunks
    let chunks = &f.train_chunks;
    let mut same_gap = 0.0;
    let mut cross_gap = 0.0;
    let mut pairs = 0;
    for i in 0..6.min(chunks.len() - 1) {
        let mut rng = Rng::new(900 + i as u64);
        let a = &chunks[i];
        let b = &chunks[i + 1];
        let enc = |ch: &ChunkSample, rng: &mut Rng| {
            let pts = sample_chunk_point_cloud(ch, f.vae.cfg().n_points, rng);
            f.vae.encode(&pts, None).unwrap()
        };
        let za1 = enc(a, &mut rng);
        let za2 = enc(a, &mut rng);
        let zb = enc(b, &mut rng);
        same_gap += consistency_loss(&za1, &za2);
        cross_gap += consistency_loss(&za1, &zb);
        let mean_gap: f64 = za1
            .mean()
            .unwrap()
            .data()
            .iter()
            .zip(zb.mean().unwrap().data())
            .map(|(&x, &y)| ((x - y) as f64).powi(2))
            .sum();
        assert!(mean_gap > 0.0, "distinct chunks produced identical means");
        pairs += 1;
    }
    assert!(pairs > 0);
    assert!(
        same_gap < cross_gap,
        "same-chunk embedding gap {same_gap:.5} should undercut cross-chunk {cross_gap:.5}"
    );
}

#[test]
fn trained_height_within_two_voxels_on_most_chunks() {
    let f = fixture();
    let chunk_size = f.vae.cfg().chunk_size as f64;
    let mut within = 0usize;
    for (ci, chunk) in f.val_chunks.iter().enumerate() {
        let mut rng = Rng::new(1800 + ci as u64);
        let pts = sample_chunk_point_cloud(chunk, f.vae.cfg().n_points, &mut rng);
        let latent = f.vae.encode(&pts, None).unwrap();
        let h_norm = f.vae.predict_height(&latent).unwrap();
        let h_vox = chunk_size * (h_norm + 1.0) / 2.0;
        if (h_vox - chunk.h_vox as f64).abs() <= 2.0 {
            within += 1;
        }
    }
    let frac = within as f64 / f.val_chunks.len() as f64;
    assert!(
        frac >= 0.9,
        "only {:.0}% of held-out chunks within 2 voxels of true height",
        frac * 100.0
    );
}

#[test]
fn trained_reconstruction_iou_reaches_target() {
    let f = fixture();
    assert!(
        f.iou_base >= 0.9,
        "fixture reconstruction IOU {:.4} below 0.9",
        f.iou_base
    );
}

#[test]
fn upsampled_vector_set_does_not_lose_quality() {
    let f = fixture();
    assert!(
        f.iou_upsampled >= f.iou_base - 1e-9,
        "upsampled IOU {:.4} fell below base {:.4}",
        f.iou_upsampled,
        f.iou_base
    );
}

#[test]
fn level_of_detail_halving_keeps_structure() {
    let f = fixture();
    let res = f.vae.cfg().chunk_size;
    let mut rng = Rng::new(777);
    let chunk = &f.val_chunks[0];
    let pts = sample_chunk_point_cloud(chunk, f.vae.cfg().n_points, &mut rng);
    let latent = f.vae.encode(&pts, None).unwrap();
    let full = f.vae.decode_chunk(&latent, res).unwrap();
    let half = f.vae.decode_chunk(&latent, res / 2).unwrap();
    // compare occupancy of the half-res decode upsampled onto the full grid
    let (nx, ny, nz) = full.grid.dims();
    let (hx, hy, hz) = half.grid.dims();
    let mut inter = 0usize;
    let mut union = 0usize;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let a = full.grid.get(x, y, z);
                let (qx, qy, qz) = ((x / 2).min(hx - 1), (y / 2).min(hy - 1), (z / 2).min(hz - 1));
                let b = half.grid.get(qx, qy, qz);
                if a && b {
                    inter += 1;
                }
                if a || b {
                    union += 1;
                }
            }
        }
    }
    let iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    assert!(iou >= 0.8, "level-of-detail halving IoU {iou:.3} below 0.8");
}
