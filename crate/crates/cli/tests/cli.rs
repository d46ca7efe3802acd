//! End-to-end checks of the CLI binary: format inspection, the synth /
//! sample-chunks path, and generate-replay determinism at micro scale.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_vecscene")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vecscene_cli_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn micro_config(dir: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "scene": {"styles": ["towers", "blocks"], "scenes_per_style": 1, "dims": [72, 96, 72], "seed": 3},
        "dataset": {"chunk_size": 16, "quads_per_scene": 16},
        "vae": {"latent_count": 4, "channels": 16, "n_points": 128, "decoder_layers": 1, "n_freq": 4, "pe_hidden": 16},
        "vae_train": {"epochs": 1, "batch_size": 16, "queries_per_chunk": 128, "workers": 2},
        "diffusion": {"t_max": 100, "inference_steps": 10,
                      "denoiser": {"d_model": 16, "layers": 3, "heads": 2, "pe_dim": 4, "latent_count": 4, "channels": 16}},
        "diffusion_train": {"epochs": 1, "batch_size": 16, "workers": 2},
        "generate": {"rows": 2, "cols": 2, "seed": 11, "parallel": 2},
        "eval": {"queries_per_chunk": 128, "surface_points": 128, "max_chunks": 2}
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn run_ok(args: &[&str]) -> String {
    let out = Command::new(bin()).args(args).output().expect("spawn vecscene");
    assert!(
        out.status.success(),
        "vecscene {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn full_cli_chain_with_generate_replay() {
    let dir = workdir("chain");
    let cfg = micro_config(&dir);
    let cfg = cfg.to_str().unwrap();
    let scenes = dir.join("scenes");
    let dataset = dir.join("dataset");
    let vae = dir.join("vae.nuip");
    let latents = dir.join("latents.nuil");
    let diffusion = dir.join("diffusion.nuip");

    run_ok(&["--config", cfg, "synth", "--out", scenes.to_str().unwrap()]);
    // info reports dims matching the scene header
    let scene_file = std::fs::read_dir(&scenes)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| p.extension().is_some_and(|x| x == "nuiv"))
        .unwrap();
    let info = run_ok(&["info", scene_file.to_str().unwrap()]);
    assert!(info.contains("72 x 96 x 72"), "info output: {info}");

    run_ok(&[
        "--config", cfg,
        "sample-chunks",
        "--scenes", scenes.to_str().unwrap(),
        "--out", dataset.to_str().unwrap(),
    ]);
    run_ok(&[
        "--config", cfg,
        "train-vae",
        "--dataset", dataset.to_str().unwrap(),
        "--out", vae.to_str().unwrap(),
    ]);
    run_ok(&[
        "--config", cfg,
        "encode-latents",
        "--dataset", dataset.to_str().unwrap(),
        "--vae", vae.to_str().unwrap(),
        "--out", latents.to_str().unwrap(),
    ]);
    run_ok(&[
        "--config", cfg,
        "train-diffusion",
        "--latents", latents.to_str().unwrap(),
        "--out", diffusion.to_str().unwrap(),
    ]);

    // smallest scene: one Full quad; grid + obj + trace emitted
    let gen = |out: &Path| {
        run_ok(&[
            "--config", cfg,
            "generate",
            "--vae", vae.to_str().unwrap(),
            "--diffusion", diffusion.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "--rows", "2",
            "--cols", "2",
            "--seed", "21",
        ]);
    };
    let out_a = dir.join("gen_a");
    let out_b = dir.join("gen_b");
    gen(&out_a);
    gen(&out_b);
    for name in ["scene.nuig", "scene.obj", "trace.txt", "nfe.json"] {
        assert!(out_a.join(name).exists(), "missing {name}");
    }
    let trace = std::fs::read_to_string(out_a.join("trace.txt")).unwrap();
    let quad_lines: Vec<&str> =
        trace.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).collect();
    assert_eq!(quad_lines.len(), 1, "2x2 scene is a single quad");
    assert!(quad_lines[0].contains("full"), "first quad must be the Full config");

    // replay determinism: byte-identical latent grid files
    let a = std::fs::read(out_a.join("scene.nuig")).unwrap();
    let b = std::fs::read(out_b.join("scene.nuig")).unwrap();
    assert_eq!(a, b, "generate with the same seed must replay byte-identically");

    // decode at a different resolution works from the emitted grid
    run_ok(&[
        "--config", cfg,
        "decode",
        out_a.join("scene.nuig").to_str().unwrap(),
        "--vae", vae.to_str().unwrap(),
        "--resolution", "8",
        "--out", dir.join("decoded.obj").to_str().unwrap(),
    ]);
    assert!(dir.join("decoded.obj").exists());

    // eval emits a structured report
    let eval_out = run_ok(&[
        "--config", cfg,
        "eval",
        "--dataset", dataset.to_str().unwrap(),
        "--vae", vae.to_str().unwrap(),
        "--out", dir.join("metrics.json").to_str().unwrap(),
    ]);
    assert!(eval_out.contains("\"iou\""));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn info_rejects_unknown_files() {
    let dir = workdir("badinfo");
    let path = dir.join("garbage.bin");
    std::fs::write(&path, b"XXXXGARBAGE").unwrap();
    let out = Command::new(bin()).args(["info", path.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success(), "info on garbage must fail");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn version_mismatch_is_a_clear_error() {
    let dir = workdir("badver");
    let path = dir.join("future.nuiv");
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"NUIV");
    bytes.extend_from_slice(&9u16.to_le_bytes());
    bytes.extend_from_slice(&[0u8; 12]);
    std::fs::write(&path, &bytes).unwrap();
    let out = Command::new(bin()).args(["info", path.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("version"), "stderr: {err}");
    let _ = std::fs::remove_dir_all(&dir);
}
