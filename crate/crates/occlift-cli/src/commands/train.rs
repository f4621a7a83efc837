//! `occlift train`: run the warm-up and joint schedule on a dataset's
//! train split, writing the checkpoint, loss curve, and mask set.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use occlift_core::config::{ExperimentConfig, MaskingSpec};
use occlift_core::harness::{build_adjacencies, masking_mode};
use occlift_core::nets::ModelState;
use occlift_core::rng::derive_seed;
use occlift_core::training::{build_training_set, run_training, MaskingMode, Phase};

use crate::error::CliError;
use crate::formats::{
    read_dataset, read_json, write_atomic, write_checkpoint, write_json_atomic,
    ExperimentConfigFile, MaskSetFile,
};
use crate::manifest::{resolve_seed, RunManifest};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Experiment configuration JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset JSON produced by `synth`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Precomputed mask set JSON; generated from the run seed when
    /// omitted and the config uses structured masking.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Run seed (flag > OCCLIFT_SEED > config).
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => read_json::<ExperimentConfigFile>(p)?.to_core(),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn run(args: &TrainArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = load_config(args.config.as_deref())?;
    cfg.validate().map_err(CliError::from)?;
    let seed = resolve_seed(args.seed, cfg.train.seed)?;
    let ds = read_dataset(&args.dataset)?;
    let n_joints = ds.skeleton.n_joints();

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", args.out.display())))?;

    let masking = match (&args.masks, &cfg.masking) {
        (Some(path), MaskingSpec::Structured { .. }) => {
            let set = read_json::<MaskSetFile>(path)?.to_core()?;
            let p = set.params();
            if p.t_frames != cfg.t_frames || p.n_joints != n_joints {
                return Err(CliError::config(format!(
                    "mask set is {}x{} nodes, run needs {}x{}",
                    p.t_frames, p.n_joints, cfg.t_frames, n_joints
                )));
            }
            MaskingMode::Structured(set)
        }
        (Some(_), other) => {
            return Err(CliError::config(format!(
                "--masks given but config masking mode is {}",
                other.label()
            )))
        }
        (None, _) => masking_mode(&cfg, n_joints, seed)?,
    };

    let masks_path = args.out.join("masks.json");
    if let MaskingMode::Structured(set) = &masking {
        write_json_atomic(&masks_path, &MaskSetFile::from_core(set))?;
    }

    let adjacencies = build_adjacencies(&cfg, &ds.skeleton)?;
    let ts = build_training_set(&ds, cfg.t_frames, cfg.t_p, cfg.mode())?;
    let model = ModelState::init(
        cfg.lnet_config(n_joints),
        cfg.rnet_config(n_joints),
        derive_seed(seed, 10),
    )?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = derive_seed(seed, 11);

    let checkpoint_path = args.out.join("checkpoint.json");
    let outcome = run_training(&ts, &adjacencies, model, masking, &train_cfg, |cp| {
        let path = args.out.join(format!("checkpoint-{:06}.json", cp.iter));
        write_checkpoint(&path, cp, &cfg.strides).map_err(|e| e.to_string())
    })?;
    write_checkpoint(&checkpoint_path, &outcome.checkpoint, &cfg.strides)?;

    let curve_path = args.out.join("loss_curve.csv");
    let mut csv = String::from("iter,phase,loss\n");
    for p in &outcome.loss_curve {
        csv.push_str(&format!("{},{},{}\n", p.iter, p.phase.label(), p.loss));
    }
    write_atomic(&curve_path, csv.as_bytes())?;

    let warmup_last = outcome
        .loss_curve
        .iter()
        .filter(|p| p.phase == Phase::Warmup)
        .next_back()
        .map(|p| p.loss);
    let joint_last =
        outcome.loss_curve.iter().filter(|p| p.phase == Phase::Joint).next_back().map(|p| p.loss);
    println!(
        "{}",
        serde_json::json!({
            "iterations": outcome.checkpoint.iter,
            "warmup_final_loss": warmup_last,
            "joint_final_loss": joint_last,
            "pseudo_frames": ts.pseudo_report.frames_labeled,
            "checkpoint": checkpoint_path.display().to_string(),
        })
    );

    let mut resolved = cfg.clone();
    resolved.train.seed = seed;
    let mut manifest = RunManifest::new(
        "train",
        serde_json::to_value(ExperimentConfigFile::from_core(&resolved))
            .map_err(|e| CliError::io(e.to_string()))?,
        seed,
    )
    .input(&args.dataset)
    .output(&checkpoint_path)
    .output(&curve_path);
    if let Some(m) = &args.masks {
        manifest = manifest.input(m);
    }
    manifest.write_next_to(&args.out, start.elapsed().as_secs_f64())?;
    Ok(())
}
