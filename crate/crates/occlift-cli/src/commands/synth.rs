//! `occlift synth`: generate a synthetic dataset file.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use occlift_core::synth::{generate_dataset, visibility_stats, SynthConfig};

use crate::error::CliError;
use crate::formats::write_dataset;
use crate::manifest::{resolve_seed, RunManifest};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Frames per sequence.
    #[arg(long, default_value_t = 600)]
    pub frames: usize,
    /// Number of training sequences.
    #[arg(long, default_value_t = 8)]
    pub sequences: usize,
    /// Number of held-out test sequences.
    #[arg(long, default_value_t = 2)]
    pub test_sequences: usize,
    /// Cameras on the capture circle.
    #[arg(long, default_value_t = 4)]
    pub cameras: usize,
    /// Detection noise sigma in pixels.
    #[arg(long, default_value_t = 5.0)]
    pub noise_px: f64,
    /// Target fraction of frames covered by occlusion events, per camera.
    #[arg(long, default_value_t = 0.3)]
    pub occlusion_rate: f64,
    /// Fraction of frames carrying 3D labels.
    #[arg(long, default_value_t = 1.0)]
    pub labeled_fraction: f64,
    /// Skeleton size: 17 or 13 joints.
    #[arg(long, default_value_t = 17)]
    pub joints: usize,
    /// Generation seed (flag > OCCLIFT_SEED > default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset path (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SynthArgs) -> Result<(), CliError> {
    if args.joints != 17 && args.joints != 13 {
        return Err(CliError::config(format!("--joints must be 13 or 17, got {}", args.joints)));
    }
    let seed = resolve_seed(args.seed, 0)?;
    let cfg = SynthConfig {
        n_train_sequences: args.sequences,
        n_test_sequences: args.test_sequences,
        n_frames: args.frames,
        n_cameras: args.cameras,
        noise_px: args.noise_px,
        occlusion_rate: args.occlusion_rate,
        labeled_fraction: args.labeled_fraction,
        n_joints: args.joints,
        seed,
    };
    let start = Instant::now();
    let ds = generate_dataset(&cfg)?;
    write_dataset(&args.out, &ds)?;

    let stats = visibility_stats(&ds);
    let summary = serde_json::json!({
        "sequences": ds.sequences.len(),
        "frames_per_sequence": args.frames,
        "cameras": ds.cameras.len(),
        "joints": ds.skeleton.n_joints(),
        "visible_fraction": stats.visible as f64 / stats.total_observations.max(1) as f64,
        "out": args.out.display().to_string(),
    });
    println!("{summary}");

    RunManifest::new(
        "synth",
        serde_json::json!({
            "frames": cfg.n_frames,
            "sequences": cfg.n_train_sequences,
            "test_sequences": cfg.n_test_sequences,
            "cameras": cfg.n_cameras,
            "noise_px": cfg.noise_px,
            "occlusion_rate": cfg.occlusion_rate,
            "labeled_fraction": cfg.labeled_fraction,
            "joints": cfg.n_joints,
        }),
        seed,
    )
    .output(&args.out)
    .write_next_to(&args.out, start.elapsed().as_secs_f64())?;
    Ok(())
}
