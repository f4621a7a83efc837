//! `occlift triangulate`: DLT pseudo-labels for the unlabeled frames of
//! a dataset's training sequences.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use occlift_core::training::{pseudo_label_frames, PseudoLabelReport};
use serde::Serialize;

use crate::error::CliError;
use crate::formats::{read_dataset, write_json_atomic, FORMAT_VERSION};
use crate::manifest::RunManifest;

#[derive(Args, Debug)]
pub struct TriangulateArgs {
    /// Dataset JSON.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output path for the pseudo-label file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct PseudoFrameFile {
    frame: usize,
    pose_world: Vec<[f64; 3]>,
    valid: Vec<bool>,
    residual_px: Vec<f64>,
}

#[derive(Serialize)]
struct PseudoSequenceFile {
    sequence: String,
    frames: Vec<PseudoFrameFile>,
}

#[derive(Serialize)]
struct PseudoLabelFileReport {
    frames_attempted: u64,
    frames_labeled: u64,
    frames_without_root: u64,
    joints_excluded: u64,
    mean_residual_px: f64,
}

#[derive(Serialize)]
struct PseudoLabelsFile {
    format_version: u32,
    report: PseudoLabelFileReport,
    sequences: Vec<PseudoSequenceFile>,
}

pub fn run(args: &TriangulateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let ds = read_dataset(&args.dataset)?;
    let mut report = PseudoLabelReport::default();
    let pseudo = pseudo_label_frames(&ds, &mut report)?;

    let sequences: Vec<PseudoSequenceFile> = ds
        .sequences
        .iter()
        .zip(&pseudo)
        .map(|(seq, frames)| PseudoSequenceFile {
            sequence: seq.id.clone(),
            frames: frames
                .iter()
                .enumerate()
                .filter_map(|(f, slot)| {
                    slot.as_ref().map(|pf| PseudoFrameFile {
                        frame: f,
                        pose_world: pf.pose.joints.iter().map(|v| v.0).collect(),
                        valid: pf.valid.clone(),
                        residual_px: pf.residual_px.clone(),
                    })
                })
                .collect(),
        })
        .collect();

    let file = PseudoLabelsFile {
        format_version: FORMAT_VERSION,
        report: PseudoLabelFileReport {
            frames_attempted: report.frames_attempted,
            frames_labeled: report.frames_labeled,
            frames_without_root: report.frames_without_root,
            joints_excluded: report.joints_excluded,
            mean_residual_px: report.mean_residual_px,
        },
        sequences,
    };
    write_json_atomic(&args.out, &file)?;

    println!(
        "{}",
        serde_json::json!({
            "frames_attempted": report.frames_attempted,
            "frames_labeled": report.frames_labeled,
            "frames_without_root": report.frames_without_root,
            "joints_excluded": report.joints_excluded,
            "mean_residual_px": report.mean_residual_px,
            "out": args.out.display().to_string(),
        })
    );

    RunManifest::new("triangulate", serde_json::json!({}), 0)
        .input(&args.dataset)
        .output(&args.out)
        .write_next_to(&args.out, start.elapsed().as_secs_f64())?;
    Ok(())
}
