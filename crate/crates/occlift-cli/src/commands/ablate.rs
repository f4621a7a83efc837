//! `occlift ablate`: sweep one parameter over values x seeds, training
//! and evaluating each cell, flushing CSV rows as cells complete.

use std::fs::File;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use clap::Args;
use occlift_core::config::MaskingSpec;
use occlift_core::harness::{ablation_cells, run_cell, AblationCell, AblationSpec, SweptParam, SweptValue};
use occlift_core::metrics::MetricReport;
use serde::Deserialize;
use serde_json::Value;

use crate::error::CliError;
use crate::formats::{read_dataset, read_json, ExperimentConfigFile};
use crate::manifest::{resolve_seed, RunManifest};

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Ablation spec JSON: {"param", "values", "seeds", "base"?}.
    #[arg(long)]
    pub spec: PathBuf,
    /// Dataset JSON.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for the CSV and manifest.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Worker threads across cells.
    #[arg(long, default_value_t = 2)]
    pub threads: usize,
    /// Base seed offset applied to every cell seed (flag > OCCLIFT_SEED
    /// > 0).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Deserialize)]
struct AblationSpecFile {
    param: String,
    values: Vec<Value>,
    seeds: Vec<u64>,
    #[serde(default)]
    base: Option<ExperimentConfigFile>,
}

fn parse_masking_value(v: &Value) -> Result<MaskingSpec, CliError> {
    let Some(text) = v.as_str() else {
        return Err(CliError::config(format!("dropout_mode value must be a string, got {v}")));
    };
    match text {
        "structured" => Ok(MaskingSpec::Structured { n_masks: 32, alpha: 1.8 }),
        "none" => Ok(MaskingSpec::None),
        other => match other.strip_prefix("bernoulli:") {
            Some(rate) => {
                let rate: f64 = rate
                    .parse()
                    .map_err(|_| CliError::config(format!("bad bernoulli rate in '{other}'")))?;
                if !(0.0..1.0).contains(&rate) {
                    return Err(CliError::config(format!("bernoulli rate {rate} not in [0, 1)")));
                }
                Ok(MaskingSpec::Bernoulli { rate })
            }
            None => Err(CliError::config(format!(
                "unknown dropout_mode '{other}' (expected structured, none, or bernoulli:<rate>)"
            ))),
        },
    }
}

fn parse_spec(file: &AblationSpecFile) -> Result<AblationSpec, CliError> {
    let base = match &file.base {
        Some(b) => b.to_core()?,
        None => occlift_core::config::ExperimentConfig::default(),
    };
    let as_count = |v: &Value| -> Result<SweptValue, CliError> {
        v.as_u64()
            .map(|n| SweptValue::Count(n as usize))
            .ok_or_else(|| CliError::config(format!("expected an integer value, got {v}")))
    };
    let (param, values) = match file.param.as_str() {
        "t_frames" => (SweptParam::WindowLen, file.values.iter().map(as_count).collect::<Result<Vec<_>, _>>()?),
        "t_p" => (SweptParam::TargetFrame, file.values.iter().map(as_count).collect::<Result<Vec<_>, _>>()?),
        "n_masks" => (SweptParam::NumMasks, file.values.iter().map(as_count).collect::<Result<Vec<_>, _>>()?),
        "alpha" => (
            SweptParam::Alpha,
            file.values
                .iter()
                .map(|v| {
                    v.as_f64()
                        .map(SweptValue::Rate)
                        .ok_or_else(|| CliError::config(format!("expected a number, got {v}")))
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
        "strides" => (
            SweptParam::Strides,
            file.values
                .iter()
                .map(|v| {
                    serde_json::from_value::<Vec<usize>>(v.clone())
                        .map(SweptValue::Strides)
                        .map_err(|_| CliError::config(format!("expected a stride list, got {v}")))
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
        "dropout_mode" => (
            SweptParam::DropoutMode,
            file.values
                .iter()
                .map(|v| parse_masking_value(v).map(SweptValue::Masking))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        other => {
            return Err(CliError::config(format!(
                "unknown swept parameter '{other}' (expected t_frames, t_p, strides, alpha, n_masks, dropout_mode)"
            )))
        }
    };
    Ok(AblationSpec { param, values, base, seeds: file.seeds.clone() })
}

pub const ABLATION_CSV_HEADER: &str =
    "param,value,seed,mpjpe,nmpjpe,pmpjpe,pck3d,eval_head,wall_seconds";

fn csv_row(cell: &AblationCell, report: &MetricReport, wall: f64) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        cell.param,
        cell.value,
        cell.seed,
        report.mpjpe,
        report.nmpjpe,
        report.pmpjpe,
        report.pck3d,
        report.eval_head.label(),
        wall
    )
}

pub fn run(args: &AblateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    if args.threads == 0 {
        return Err(CliError::config("--threads must be positive"));
    }
    let spec_file: AblationSpecFile = read_json(&args.spec)?;
    let mut spec = parse_spec(&spec_file)?;
    let seed_offset = resolve_seed(args.seed, 0)?;
    for s in &mut spec.seeds {
        *s = s.wrapping_add(seed_offset);
    }
    let cells = ablation_cells(&spec).map_err(CliError::from)?;
    let ds = read_dataset(&args.dataset)?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let csv_path = args.out_dir.join("ablation.csv");
    let mut file = File::create(&csv_path)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", csv_path.display())))?;
    writeln!(file, "{ABLATION_CSV_HEADER}").map_err(CliError::from)?;
    let sink = Mutex::new(file);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::config(e.to_string()))?;
    let errors: Mutex<Vec<String>> = Mutex::new(Vec::new());
    pool.scope(|scope| {
        for cell in &cells {
            let ds = &ds;
            let sink = &sink;
            let errors = &errors;
            scope.spawn(move |_| {
                let t0 = Instant::now();
                match run_cell(cell, ds) {
                    Ok(outcome) => {
                        let wall = t0.elapsed().as_secs_f64();
                        let mut rows = csv_row(cell, &outcome.eval.lnet, wall);
                        rows.push_str(&csv_row(cell, &outcome.eval.rnet, wall));
                        // Flush per completed cell so partial sweeps
                        // survive interruption.
                        let mut f = sink.lock().expect("csv sink poisoned");
                        if let Err(e) = f.write_all(rows.as_bytes()).and_then(|_| f.flush()) {
                            errors.lock().expect("error sink").push(e.to_string());
                        }
                        eprintln!(
                            "cell {}={} seed {}: rnet mpjpe {:.2} mm ({:.0}s)",
                            cell.param, cell.value, cell.seed, outcome.eval.rnet.mpjpe, wall
                        );
                    }
                    Err(e) => {
                        errors
                            .lock()
                            .expect("error sink")
                            .push(format!("cell {}={} seed {}: {e}", cell.param, cell.value, cell.seed));
                    }
                }
            });
        }
    });
    let errors = errors.into_inner().expect("error sink");
    if !errors.is_empty() {
        return Err(CliError::config(format!(
            "{} of {} cells failed; first: {}",
            errors.len(),
            cells.len(),
            errors[0]
        )));
    }

    println!(
        "{}",
        serde_json::json!({
            "cells": cells.len(),
            "csv": csv_path.display().to_string(),
        })
    );
    RunManifest::new(
        "ablate",
        serde_json::json!({
            "param": spec.param.label(),
            "values": cells.iter().map(|c| c.value.clone()).collect::<std::collections::BTreeSet<_>>(),
            "seeds": spec.seeds,
            "threads": args.threads,
        }),
        seed_offset,
    )
    .input(&args.spec)
    .input(&args.dataset)
    .output(&csv_path)
    .write_next_to(&args.out_dir, start.elapsed().as_secs_f64())?;
    Ok(())
}
