//! `occlift stats`: visibility and split statistics of a dataset file,
//! recounted directly from the stored detections.

use std::path::PathBuf;

use clap::Args;
use occlift_core::synth::{visibility_stats, Subset};

use crate::error::CliError;
use crate::formats::read_dataset;

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Dataset JSON.
    #[arg(long)]
    pub dataset: PathBuf,
}

pub fn run(args: &StatsArgs) -> Result<(), CliError> {
    let ds = read_dataset(&args.dataset)?;
    let vis = visibility_stats(&ds);
    let per_sequence: Vec<_> = ds
        .sequences
        .iter()
        .map(|seq| {
            let labeled = seq.labeled.iter().filter(|&&l| l).count();
            let mut observations = 0u64;
            let mut visible = 0u64;
            for view in &seq.views {
                for frame in &view.frames {
                    for &v in &frame.visibility {
                        observations += 1;
                        visible += v as u64;
                    }
                }
            }
            serde_json::json!({
                "id": seq.id,
                "subset": match seq.subset { Subset::Train => "train", Subset::Test => "test" },
                "frames": seq.frames_world.len(),
                "labeled_frames": labeled,
                "visible_fraction": visible as f64 / observations.max(1) as f64,
                "occlusion_events": seq.script.events.len(),
            })
        })
        .collect();

    println!(
        "{}",
        serde_json::json!({
            "skeleton_joints": ds.skeleton.n_joints(),
            "cameras": ds.cameras.len(),
            "sequences": ds.sequences.len(),
            "total_observations": vis.total_observations,
            "visible": vis.visible,
            "occluded": vis.occluded,
            "visible_fraction": vis.visible as f64 / vis.total_observations.max(1) as f64,
            "per_sequence": per_sequence,
        })
    );
    Ok(())
}
