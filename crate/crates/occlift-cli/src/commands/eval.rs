//! `occlift eval`: metric report for a checkpoint over a dataset split,
//! for both network heads.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use occlift_core::config::ExperimentConfig;
use occlift_core::graph::{build_graph, normalize};
use occlift_core::harness::{evaluate, EvalConfig};
use occlift_core::synth::Subset;
use occlift_core::training::Input2D;

use crate::error::CliError;
use crate::formats::{read_checkpoint, read_dataset, write_json_atomic, MetricReportFile};
use crate::manifest::RunManifest;

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SubsetArg {
    Train,
    Test,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Input2DArg {
    /// The corrupted detections stored in the dataset.
    Detections,
    /// Noise-free reprojections of the ground truth.
    Clean,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint JSON produced by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset JSON.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Which split to evaluate.
    #[arg(long, value_enum, default_value_t = SubsetArg::Test)]
    pub subset: SubsetArg,
    /// 2D input source.
    #[arg(long, value_enum, default_value_t = Input2DArg::Detections)]
    pub input_2d: Input2DArg,
    /// Stride between evaluated windows.
    #[arg(long, default_value_t = ExperimentConfig::default().eval_window_stride)]
    pub window_stride: usize,
    /// Optional report output path (JSON); the report always goes to
    /// stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    let start = Instant::now();
    if args.window_stride == 0 {
        return Err(CliError::config("--window-stride must be positive"));
    }
    let (cp, strides) = read_checkpoint(&args.checkpoint)?;
    let ds = read_dataset(&args.dataset)?;
    if ds.skeleton.n_joints() != cp.model.lnet_cfg.n_joints {
        return Err(CliError::config(format!(
            "checkpoint expects {} joints, dataset has {}",
            cp.model.lnet_cfg.n_joints,
            ds.skeleton.n_joints()
        )));
    }

    // Rebuild the window graph the checkpoint was trained on.
    let graph = build_graph(&ds.skeleton, cp.model.rnet_cfg.t_frames, &strides)
        .map_err(|e| CliError::config(e.to_string()))?;
    let adjacencies = normalize(&graph);

    let eval_cfg = EvalConfig {
        subset: match args.subset {
            SubsetArg::Train => Subset::Train,
            SubsetArg::Test => Subset::Test,
        },
        input: match args.input_2d {
            Input2DArg::Detections => Input2D::Detections,
            Input2DArg::Clean => Input2D::CleanProjections,
        },
        window_stride: args.window_stride,
    };
    let outcome = evaluate(&cp.model, &adjacencies, &ds, &eval_cfg)?;

    let report = serde_json::json!({
        "n_windows": outcome.n_windows,
        "lnet": MetricReportFile::from_core(&outcome.lnet),
        "rnet": MetricReportFile::from_core(&outcome.rnet),
    });
    println!("{report}");

    if let Some(out) = &args.out {
        write_json_atomic(out, &report)?;
        RunManifest::new(
            "eval",
            serde_json::json!({
                "subset": format!("{:?}", args.subset).to_lowercase(),
                "input_2d": format!("{:?}", args.input_2d).to_lowercase(),
                "window_stride": args.window_stride,
            }),
            cp.model.seed,
        )
        .input(&args.checkpoint)
        .input(&args.dataset)
        .output(out)
        .write_next_to(out, start.elapsed().as_secs_f64())?;
    }
    Ok(())
}

