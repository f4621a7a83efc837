//! Experiment driver: end-to-end train+evaluate runs from a single
//! config and seed, plus the ablation sweep machinery. Pure compute;
//! timing, threading and CSV writing belong to the caller.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::config::{ExperimentConfig, MaskingSpec};
use crate::geometry::{backproject, DepthDecomposition, Pose3D};
use crate::graph::{build_graph, normalize, GraphError, NormalizedAdjacency};
use crate::masks::{generate_masks, MaskError};
use crate::metrics::{EvalHead, EvalPair, MetricError, MetricReport};
use crate::nets::{lnet_forward_tape, rnet_forward_tape, ModelState, NetError, DEPTH_FEATURE_SCALE};
use crate::rng::derive_seed;
use crate::synth::{Dataset, Subset, SynthError};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::training::{
    build_tracks, build_training_set, run_training, Checkpoint, Input2D, LossPoint, MaskingMode,
    TrainError, ViewTrack,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("ablation spec error: {0}")]
    Spec(String),
    #[error("no evaluation windows (subset empty or sequences shorter than the window)")]
    NoEvalWindows,
}

/// Seed streams derived from a run seed.
const SEED_MODEL: u64 = 10;
const SEED_TRAIN: u64 = 11;
const SEED_MASKS: u64 = 12;

/// Evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub subset: Subset,
    pub input: Input2D,
    pub window_stride: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { subset: Subset::Test, input: Input2D::Detections, window_stride: 15 }
    }
}

/// Metric reports for both heads over one evaluation pass.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub lnet: MetricReport,
    pub rnet: MetricReport,
    pub n_windows: usize,
}

/// Depth increments for one window from the refinement net alone
/// (evaluation mode, all-ones mask).
fn rnet_delta(
    state: &ModelState,
    adjacencies: &[NormalizedAdjacency],
    features: Tensor,
) -> Result<Vec<f64>, NetError> {
    let mut tape = Tape::new();
    let theta: Vec<_> = state.theta_tensors().into_iter().map(|t| tape.param(t.clone())).collect();
    let h = tape.constant(features);
    let delta = rnet_forward_tape(&mut tape, &theta, &state.rnet_cfg, adjacencies, h, None)?;
    Ok(tape.value(delta).data().to_vec())
}

/// Lift a whole track in one batched pass (evaluation mode).
fn lift_track(state: &ModelState, track: &ViewTrack) -> Result<Tensor, NetError> {
    let width = 2 * state.lnet_cfg.n_joints;
    let input = Tensor::matrix(track.n_frames, width, track.norm_flat.clone())?;
    if !input.all_finite() {
        return Err(NetError::NonFiniteInput);
    }
    let mut tape = Tape::new();
    let phi: Vec<_> = state.phi_tensors().into_iter().map(|t| tape.param(t.clone())).collect();
    let input = tape.constant(input);
    let out = lnet_forward_tape(&mut tape, &phi, &state.lnet_cfg, input, None)?;
    Ok(tape.value(out).clone())
}

/// Evaluate a trained model over the chosen subset: both the lifting
/// head (per-frame depths straight from LNet) and the refinement head
/// (depths corrected by RNet over each window). Windows advance by
/// `window_stride`; ground-truth root depth feeds the back-projection.
pub fn evaluate(
    state: &ModelState,
    adjacencies: &[NormalizedAdjacency],
    ds: &Dataset,
    cfg: &EvalConfig,
) -> Result<EvalOutcome, HarnessError> {
    let t_frames = state.rnet_cfg.t_frames;
    let t_p = state.rnet_cfg.t_p;
    let n_joints = state.lnet_cfg.n_joints;
    let n_nodes = t_frames * n_joints;
    let tracks = build_tracks(ds, cfg.subset, cfg.input)?;

    let mut pairs_lnet = Vec::new();
    let mut pairs_rnet = Vec::new();
    let mut n_windows = 0usize;
    for track in &tracks {
        if track.n_frames < t_frames {
            continue;
        }
        let lifted = lift_track(state, track)?;
        let camera = &ds.cameras[track.camera_idx].camera;
        let seq = &ds.sequences[track.seq_idx];
        let mut start = 0;
        while start + t_frames <= track.n_frames {
            let target = start + t_p;
            let lnet_depths = lifted.row_slice(target).to_vec();

            let mut features = Vec::with_capacity(n_nodes);
            for f in start..start + t_frames {
                features.extend(lifted.row_slice(f).iter().map(|d| d * DEPTH_FEATURE_SCALE));
            }
            let delta = rnet_delta(state, adjacencies, Tensor::column(features))?;
            let refined: Vec<f64> =
                lnet_depths.iter().zip(&delta).map(|(d, inc)| d + inc).collect();

            let gt_world = &seq.frames_world[target];
            let gt_cam = Pose3D::new(
                gt_world.joints.iter().map(|&p| camera.world_to_camera(p)).collect(),
                crate::geometry::CoordFrame::Camera,
            );
            let droot = track.droot_gt[target];
            let pixel = &track.pixels[target];
            let lnet_pose = backproject(
                camera,
                pixel,
                &DepthDecomposition { d_root: droot, d_rel: lnet_depths },
            )?
            .0;
            let rnet_pose = backproject(
                camera,
                pixel,
                &DepthDecomposition { d_root: droot, d_rel: refined },
            )?
            .0;
            pairs_lnet.push(EvalPair::all_valid(lnet_pose, gt_cam.clone()));
            pairs_rnet.push(EvalPair::all_valid(rnet_pose, gt_cam));
            n_windows += 1;
            start += cfg.window_stride;
        }
    }
    if n_windows == 0 {
        return Err(HarnessError::NoEvalWindows);
    }
    Ok(EvalOutcome {
        lnet: MetricReport::from_pairs(&pairs_lnet, EvalHead::Lnet)?,
        rnet: MetricReport::from_pairs(&pairs_rnet, EvalHead::Rnet)?,
        n_windows,
    })
}

/// Outcome of one full run.
#[derive(Debug)]
pub struct RunOutcome {
    pub checkpoint: Checkpoint,
    pub loss_curve: Vec<LossPoint>,
    pub eval: EvalOutcome,
}

/// Materialize the masking mode for a run seed.
pub fn masking_mode(
    cfg: &ExperimentConfig,
    n_joints: usize,
    run_seed: u64,
) -> Result<MaskingMode, MaskError> {
    Ok(match cfg.masking {
        MaskingSpec::None => MaskingMode::None,
        MaskingSpec::Structured { .. } => {
            let params = cfg
                .mask_params(n_joints, derive_seed(run_seed, SEED_MASKS))
                .expect("structured spec yields params");
            MaskingMode::Structured(generate_masks(params)?)
        }
        MaskingSpec::Bernoulli { rate } => MaskingMode::Bernoulli { rate },
    })
}

/// Build the normalized adjacencies for a config over a skeleton.
pub fn build_adjacencies(
    cfg: &ExperimentConfig,
    skeleton: &crate::skeleton::Skeleton,
) -> Result<Vec<NormalizedAdjacency>, GraphError> {
    Ok(normalize(&build_graph(skeleton, cfg.t_frames, &cfg.strides)?))
}

/// Train on the dataset's train split and evaluate on its test split.
/// Everything is derived from (dataset, config, run_seed); two calls
/// with the same arguments produce bit-identical outcomes.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    run_seed: u64,
    mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<(), String>,
) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let n_joints = ds.skeleton.n_joints();
    let adjacencies = build_adjacencies(cfg, &ds.skeleton)?;
    let masking = masking_mode(cfg, n_joints, run_seed)?;
    let ts = build_training_set(ds, cfg.t_frames, cfg.t_p, cfg.mode())?;
    let model = ModelState::init(
        cfg.lnet_config(n_joints),
        cfg.rnet_config(n_joints),
        derive_seed(run_seed, SEED_MODEL),
    )?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = derive_seed(run_seed, SEED_TRAIN);
    let outcome = run_training(&ts, &adjacencies, model, masking, &train_cfg, &mut on_checkpoint)?;
    let eval = evaluate(
        &outcome.checkpoint.model,
        &adjacencies,
        ds,
        &EvalConfig {
            subset: Subset::Test,
            input: Input2D::Detections,
            window_stride: cfg.eval_window_stride,
        },
    )?;
    Ok(RunOutcome { checkpoint: outcome.checkpoint, loss_curve: outcome.loss_curve, eval })
}

/// Parameter swept by an ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptParam {
    WindowLen,
    TargetFrame,
    Strides,
    Alpha,
    NumMasks,
    DropoutMode,
}

impl SweptParam {
    pub fn label(&self) -> &'static str {
        match self {
            SweptParam::WindowLen => "t_frames",
            SweptParam::TargetFrame => "t_p",
            SweptParam::Strides => "strides",
            SweptParam::Alpha => "alpha",
            SweptParam::NumMasks => "n_masks",
            SweptParam::DropoutMode => "dropout_mode",
        }
    }
}

/// One sweep value.
#[derive(Debug, Clone, PartialEq)]
pub enum SweptValue {
    Count(usize),
    Rate(f64),
    Strides(Vec<usize>),
    Masking(MaskingSpec),
}

impl SweptValue {
    pub fn label(&self) -> String {
        match self {
            SweptValue::Count(v) => format!("{v}"),
            SweptValue::Rate(v) => format!("{v}"),
            SweptValue::Strides(s) => {
                if s.is_empty() {
                    String::from("none")
                } else {
                    let parts: Vec<String> = s.iter().map(|v| format!("{v}")).collect();
                    parts.join("+")
                }
            }
            SweptValue::Masking(m) => m.label(),
        }
    }
}

/// Sweep description: one parameter, its values, the base config, and
/// the seeds each value is run under.
#[derive(Debug, Clone)]
pub struct AblationSpec {
    pub param: SweptParam,
    pub values: Vec<SweptValue>,
    pub base: ExperimentConfig,
    pub seeds: Vec<u64>,
}

/// A fully resolved sweep cell.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub param: &'static str,
    pub value: String,
    pub seed: u64,
    pub config: ExperimentConfig,
}

/// Substitute one swept value into the base config.
pub fn apply_swept_value(
    base: &ExperimentConfig,
    param: SweptParam,
    value: &SweptValue,
) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = base.clone();
    match (param, value) {
        (SweptParam::WindowLen, SweptValue::Count(t)) => {
            cfg.t_frames = *t;
            cfg.t_p = t / 2;
            cfg.strides.retain(|&s| s < *t);
        }
        (SweptParam::TargetFrame, SweptValue::Count(tp)) => cfg.t_p = *tp,
        (SweptParam::Strides, SweptValue::Strides(s)) => cfg.strides = s.clone(),
        (SweptParam::Alpha, SweptValue::Rate(alpha)) => {
            cfg.masking = match cfg.masking {
                MaskingSpec::Structured { n_masks, .. } => {
                    MaskingSpec::Structured { n_masks, alpha: *alpha }
                }
                other => other,
            };
        }
        (SweptParam::NumMasks, SweptValue::Count(n)) => {
            cfg.masking = if *n == 0 {
                MaskingSpec::None
            } else {
                match cfg.masking {
                    MaskingSpec::Structured { alpha, .. } => {
                        MaskingSpec::Structured { n_masks: *n, alpha }
                    }
                    other => other,
                }
            };
        }
        (SweptParam::DropoutMode, SweptValue::Masking(spec)) => cfg.masking = spec.clone(),
        (param, value) => {
            return Err(HarnessError::Spec(format!(
                "value {value:?} does not fit parameter {}",
                param.label()
            )))
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Expand a spec into independent cells (value x seed), each with its
/// own resolved config. Cells are safe to run in parallel.
pub fn ablation_cells(spec: &AblationSpec) -> Result<Vec<AblationCell>, HarnessError> {
    if spec.values.is_empty() || spec.seeds.is_empty() {
        return Err(HarnessError::Spec(String::from("values and seeds must be non-empty")));
    }
    let mut cells = Vec::with_capacity(spec.values.len() * spec.seeds.len());
    for value in &spec.values {
        let config = apply_swept_value(&spec.base, spec.param, value)?;
        for &seed in &spec.seeds {
            cells.push(AblationCell {
                param: spec.param.label(),
                value: value.label(),
                seed,
                config: config.clone(),
            });
        }
    }
    Ok(cells)
}

/// Run one cell to completion.
pub fn run_cell(cell: &AblationCell, ds: &Dataset) -> Result<RunOutcome, HarnessError> {
    run_experiment(&cell.config, ds, cell.seed, |_| Ok(()))
}
