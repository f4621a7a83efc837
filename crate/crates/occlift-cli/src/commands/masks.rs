//! `occlift masks`: generate a structured mask set, write its JSON and
//! a per-mask stats CSV, and print the derived arithmetic.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use occlift_core::masks::{dropped_runs_per_joint, generate_masks, mask_stats, MaskParams};

use crate::error::CliError;
use crate::formats::{write_atomic, write_json_atomic, MaskSetFile};
use crate::manifest::{resolve_seed, RunManifest};

#[derive(Args, Debug)]
pub struct MasksArgs {
    /// Window length in frames.
    #[arg(long, default_value_t = 31)]
    pub frames: usize,
    /// Joints per frame.
    #[arg(long, default_value_t = 17)]
    pub joints: usize,
    /// Total node count; must equal frames * joints (alternative to
    /// --frames: the window length is derived when divisible).
    #[arg(long)]
    pub n_nodes: Option<usize>,
    /// Overlap parameter controlling the drop rate.
    #[arg(long, default_value_t = 1.8)]
    pub alpha: f64,
    /// Number of masks in the set.
    #[arg(long, default_value_t = 32)]
    pub n_masks: usize,
    /// Generation seed (flag > OCCLIFT_SEED > default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mask set output path (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-mask stats CSV path (default: next to --out).
    #[arg(long)]
    pub stats_csv: Option<PathBuf>,
}

pub fn run(args: &MasksArgs) -> Result<(), CliError> {
    let t_frames = match args.n_nodes {
        Some(n) => {
            if args.joints == 0 || n % args.joints != 0 {
                return Err(CliError::config(format!(
                    "--n-nodes {n} is not divisible by --joints {}",
                    args.joints
                )));
            }
            n / args.joints
        }
        None => args.frames,
    };
    let seed = resolve_seed(args.seed, 0)?;
    let params =
        MaskParams { n_masks: args.n_masks, alpha: args.alpha, t_frames, n_joints: args.joints, seed };
    let start = Instant::now();
    let set = generate_masks(params)?;
    let stats = mask_stats(&set);

    let report = serde_json::json!({
        "n_nodes": params.n_nodes(),
        "t_frames": params.t_frames,
        "n_joints": params.n_joints,
        "n_masks": params.n_masks,
        "alpha": params.alpha,
        "beta": params.beta(),
        "masked_rate": stats.masked_rate,
        "mean_pairwise_overlap": stats.mean_pairwise_overlap,
    });
    println!("{report}");

    let Some(out) = &args.out else { return Ok(()) };
    write_json_atomic(out, &MaskSetFile::from_core(&set))?;

    let csv_path = match &args.stats_csv {
        Some(p) => p.clone(),
        None => out.with_extension("stats.csv"),
    };
    let mut csv = String::from("mask_id,popcount,max_run,mean_run\n");
    for (i, mask) in set.masks().iter().enumerate() {
        let runs: Vec<usize> =
            dropped_runs_per_joint(mask, params.t_frames, params.n_joints).into_iter().flatten().collect();
        let popcount = mask.iter().filter(|&&b| b).count();
        let max_run = runs.iter().copied().max().unwrap_or(0);
        let mean_run = if runs.is_empty() {
            0.0
        } else {
            runs.iter().sum::<usize>() as f64 / runs.len() as f64
        };
        csv.push_str(&format!("{i},{popcount},{max_run},{mean_run}\n"));
    }
    write_atomic(&csv_path, csv.as_bytes())?;

    RunManifest::new(
        "masks",
        serde_json::json!({
            "frames": params.t_frames,
            "joints": params.n_joints,
            "alpha": params.alpha,
            "n_masks": params.n_masks,
        }),
        seed,
    )
    .output(out)
    .output(&csv_path)
    .write_next_to(out, start.elapsed().as_secs_f64())?;
    Ok(())
}
