//! Training: a warm start that fits the lifting net alone on labeled
//! frames, then joint optimization of both networks through the
//! refinement loss on the target frame, with structured-mask draws and
//! optional DLT pseudo-labels for unlabeled multi-view footage.
//!
//! The whole loop is a pure function of (data, config, seed): one
//! seeded ChaCha stream drives sampling, mask draws and dropout in a
//! fixed order, so reruns are bit-identical.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from the trait in no_std builds
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{normalize2d, triangulate_joint, Camera, CoordFrame, GeometryError, Pose2D, Pose3D};
use crate::graph::NormalizedAdjacency;
use crate::linalg::Vec3;
use crate::masks::MaskSet;
use crate::nets::{
    bind_params, lnet_forward_tape, rnet_forward_tape, sample_dropout_masks, ModelState, NetError,
    DEPTH_FEATURE_SCALE,
};
use crate::optim::{AdamHyper, AdamState, OptimError};
use crate::rng::seeded;
use crate::synth::{Dataset, RigCamera, Subset};
use crate::tape::{NodeId, Tape, TapeError};
use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("labeled set is empty")]
    EmptyLabeledSet,
    #[error("no training windows available")]
    NoWindows,
    #[error("non-finite loss at iteration {iter}")]
    NonFiniteLoss { iter: u64 },
    #[error("checkpoint sink failed: {0}")]
    Sink(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Shape(#[from] crate::tensor::ShapeError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Supervised,
    SemiSupervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    GroundTruth,
    Pseudo,
}

/// Node-masking regime during joint training. `Structured` draws
/// uniformly from the precomputed mask set; `Bernoulli` drops nodes
/// independently at the given rate (the MC-dropout baseline); `None`
/// feeds the full graph.
#[derive(Debug, Clone)]
pub enum MaskingMode {
    None,
    Structured(MaskSet),
    Bernoulli { rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub warmup_iters: u64,
    pub lr_warmup: f64,
    pub lr_phi: f64,
    pub lr_theta: f64,
    pub batch_size: usize,
    /// Batch size of the warm-start phase. Warm-up steps amortize the
    /// weight traffic over the batch, so larger values are nearly free.
    pub warmup_batch_size: usize,
    pub total_iters: u64,
    pub seed: u64,
    pub mode: TrainMode,
    /// Emit an intermediate checkpoint every this many joint
    /// iterations; 0 disables intermediate checkpoints.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            warmup_iters: 1000,
            lr_warmup: 1e-4,
            lr_phi: 5e-5,
            lr_theta: 1e-4,
            batch_size: 1,
            warmup_batch_size: 8,
            total_iters: 3500,
            seed: 0,
            mode: TrainMode::Supervised,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr_warmup > 0.0 && self.lr_phi > 0.0 && self.lr_theta > 0.0) {
            return Err(TrainError::Config(String::from("learning rates must be positive")));
        }
        if self.warmup_iters > self.total_iters {
            return Err(TrainError::Config(String::from("warmup_iters exceeds total_iters")));
        }
        if self.batch_size == 0 || self.warmup_batch_size == 0 {
            return Err(TrainError::Config(String::from("batch sizes must be at least 1")));
        }
        Ok(())
    }
}

/// One sequence seen from one camera: flattened normalized detections
/// plus everything needed to rebuild windows cheaply.
#[derive(Debug, Clone)]
pub struct ViewTrack {
    pub seq_idx: usize,
    pub camera_idx: usize,
    pub n_frames: usize,
    /// Row-major [n_frames x 2N_J] normalized detections.
    pub norm_flat: Vec<f64>,
    /// Pixel detections with visibility, per frame.
    pub pixels: Vec<Pose2D>,
    /// Ground-truth root depth (camera-frame z of the root) per frame.
    pub droot_gt: Vec<f64>,
    /// Triangulated root depth per frame; NaN where no pseudo-label.
    pub droot_pseudo: Vec<f64>,
}

/// Triangulated pseudo-label for one frame.
#[derive(Debug, Clone)]
pub struct PseudoFrame {
    pub pose: Pose3D,
    pub valid: Vec<bool>,
    pub residual_px: Vec<f64>,
}

/// Counters from the pseudo-labeling pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLabelReport {
    pub frames_attempted: u64,
    pub frames_labeled: u64,
    /// Frames abandoned because the root joint had fewer than 2 views.
    pub frames_without_root: u64,
    /// Non-root joints excluded from losses for lack of views.
    pub joints_excluded: u64,
    pub mean_residual_px: f64,
}

/// A training window: track, first frame, and which label supervises
/// the target frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowKey {
    pub track: usize,
    pub start: usize,
    pub kind: LabelKind,
}

/// Windowed training data derived from a dataset.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub n_joints: usize,
    pub t_frames: usize,
    pub t_p: usize,
    pub cameras: Vec<RigCamera>,
    pub tracks: Vec<ViewTrack>,
    /// Ground-truth world poses indexed by dataset sequence.
    pub gt_world: Vec<Vec<Pose3D>>,
    /// Pseudo-labels indexed by dataset sequence and frame.
    pub pseudo_world: Vec<Vec<Option<PseudoFrame>>>,
    pub labeled_windows: Vec<WindowKey>,
    pub pseudo_windows: Vec<WindowKey>,
    /// (track, frame) pairs with ground-truth labels for the warm start.
    pub warmup_frames: Vec<(usize, usize)>,
    pub pseudo_report: PseudoLabelReport,
    all_valid: Vec<bool>,
}

/// How the 2D input stream is sourced when building tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input2D {
    /// The corrupted detections stored in the dataset.
    Detections,
    /// Noise-free reprojections of the ground truth, all visible.
    CleanProjections,
}

/// Build per-view tracks for the chosen subset.
pub fn build_tracks(
    ds: &Dataset,
    subset: Subset,
    input: Input2D,
) -> Result<Vec<ViewTrack>, TrainError> {
    let mut tracks = Vec::new();
    for (seq_idx, seq) in ds.sequences.iter().enumerate() {
        if seq.subset != subset {
            continue;
        }
        for view in &seq.views {
            let cam_idx = view.camera_index;
            let rig = &ds.cameras[cam_idx];
            let n_frames = seq.frames_world.len();
            let mut norm_flat = Vec::with_capacity(n_frames * 2 * ds.skeleton.n_joints());
            let mut pixels = Vec::with_capacity(n_frames);
            let mut droot_gt = Vec::with_capacity(n_frames);
            for (f, world) in seq.frames_world.iter().enumerate() {
                let pixel = match input {
                    Input2D::Detections => view.frames[f].clone(),
                    Input2D::CleanProjections => {
                        crate::geometry::project(&rig.camera, world)?.0
                    }
                };
                let norm = normalize2d(&pixel, rig.width, rig.height)?;
                for &[x, y] in &norm.joints {
                    norm_flat.push(x);
                    norm_flat.push(y);
                }
                pixels.push(pixel);
                droot_gt.push(rig.camera.world_to_camera(world.joints[0]).z());
            }
            let droot_pseudo = vec![f64::NAN; n_frames];
            tracks.push(ViewTrack {
                seq_idx,
                camera_idx: cam_idx,
                n_frames,
                norm_flat,
                pixels,
                droot_gt,
                droot_pseudo,
            });
        }
    }
    Ok(tracks)
}

/// Triangulate pseudo-labels for the unlabeled frames of the training
/// sequences. Joints visible in fewer than two views are flagged
/// invalid; frames whose root cannot be triangulated are dropped
/// entirely (no root depth means no lifting target).
pub fn pseudo_label_frames(
    ds: &Dataset,
    report: &mut PseudoLabelReport,
) -> Result<Vec<Vec<Option<PseudoFrame>>>, TrainError> {
    let cams: Vec<Camera> = ds.cameras.iter().map(|c| c.camera.clone()).collect();
    let n_joints = ds.skeleton.n_joints();
    let mut out = Vec::with_capacity(ds.sequences.len());
    let mut residual_sum = 0.0;
    let mut residual_count = 0u64;
    for seq in &ds.sequences {
        let n_frames = seq.frames_world.len();
        let mut frames: Vec<Option<PseudoFrame>> = vec![None; n_frames];
        if seq.subset != Subset::Train {
            out.push(frames);
            continue;
        }
        for (f, slot) in frames.iter_mut().enumerate() {
            if seq.labeled[f] {
                continue;
            }
            report.frames_attempted += 1;
            let mut joints = vec![Vec3::ZERO; n_joints];
            let mut valid = vec![false; n_joints];
            let mut residual = vec![0.0; n_joints];
            for j in 0..n_joints {
                let views: Vec<(usize, [f64; 2])> = seq
                    .views
                    .iter()
                    .filter(|v| v.frames[f].visibility[j])
                    .map(|v| (v.camera_index, v.frames[f].joints[j]))
                    .collect();
                match triangulate_joint(&cams, &views, j) {
                    Ok((p, r)) => {
                        joints[j] = p;
                        valid[j] = true;
                        residual[j] = r;
                        residual_sum += r;
                        residual_count += 1;
                    }
                    Err(GeometryError::InsufficientViews { .. }) => {
                        report.joints_excluded += 1;
                    }
                    Err(other) => return Err(other.into()),
                }
            }
            if !valid[0] {
                report.frames_without_root += 1;
                continue;
            }
            report.frames_labeled += 1;
            *slot = Some(PseudoFrame {
                pose: Pose3D::new(joints, CoordFrame::World),
                valid,
                residual_px: residual,
            });
        }
        out.push(frames);
    }
    if residual_count > 0 {
        report.mean_residual_px = residual_sum / residual_count as f64;
    }
    Ok(out)
}

/// Assemble the windowed training set for the given window geometry.
pub fn build_training_set(
    ds: &Dataset,
    t_frames: usize,
    t_p: usize,
    mode: TrainMode,
) -> Result<TrainingSet, TrainError> {
    if t_p >= t_frames {
        return Err(TrainError::Config(String::from("target frame outside window")));
    }
    let n_joints = ds.skeleton.n_joints();
    let mut tracks = build_tracks(ds, Subset::Train, Input2D::Detections)?;
    let gt_world: Vec<Vec<Pose3D>> = ds.sequences.iter().map(|s| s.frames_world.clone()).collect();

    let mut pseudo_report = PseudoLabelReport::default();
    let pseudo_world = if mode == TrainMode::SemiSupervised {
        let frames = pseudo_label_frames(ds, &mut pseudo_report)?;
        for track in &mut tracks {
            let cam = &ds.cameras[track.camera_idx].camera;
            for f in 0..track.n_frames {
                if let Some(pf) = &frames[track.seq_idx][f] {
                    track.droot_pseudo[f] = cam.world_to_camera(pf.pose.joints[0]).z();
                }
            }
        }
        frames
    } else {
        ds.sequences.iter().map(|s| vec![None; s.frames_world.len()]).collect()
    };

    let mut labeled_windows = Vec::new();
    let mut pseudo_windows = Vec::new();
    let mut warmup_frames = Vec::new();
    for (t_idx, track) in tracks.iter().enumerate() {
        let seq = &ds.sequences[track.seq_idx];
        for f in 0..track.n_frames {
            if seq.labeled[f] {
                warmup_frames.push((t_idx, f));
            }
        }
        if track.n_frames < t_frames {
            continue; // windows shorter than T are skipped
        }
        for start in 0..=track.n_frames - t_frames {
            let target = start + t_p;
            if seq.labeled[target] {
                labeled_windows.push(WindowKey { track: t_idx, start, kind: LabelKind::GroundTruth });
            } else if pseudo_world[track.seq_idx][target].is_some() {
                pseudo_windows.push(WindowKey { track: t_idx, start, kind: LabelKind::Pseudo });
            }
        }
    }

    Ok(TrainingSet {
        n_joints,
        t_frames,
        t_p,
        cameras: ds.cameras.clone(),
        tracks,
        gt_world,
        pseudo_world,
        labeled_windows,
        pseudo_windows,
        warmup_frames,
        pseudo_report,
        all_valid: vec![true; n_joints],
    })
}

/// One assembled training sample.
pub struct StepSample<'a> {
    pub input: Tensor,
    pub pixel_tp: &'a Pose2D,
    pub droot_tp: f64,
    pub camera: &'a Camera,
    pub target_world: &'a Pose3D,
    pub valid: &'a [bool],
}

impl TrainingSet {
    pub fn n_windows(&self, kind: LabelKind) -> usize {
        match kind {
            LabelKind::GroundTruth => self.labeled_windows.len(),
            LabelKind::Pseudo => self.pseudo_windows.len(),
        }
    }

    /// Materialize the window behind a key.
    pub fn window_sample(&self, key: WindowKey) -> StepSample<'_> {
        let track = &self.tracks[key.track];
        let width = 2 * self.n_joints;
        let target = key.start + self.t_p;
        let input = Tensor::matrix(
            self.t_frames,
            width,
            track.norm_flat[key.start * width..(key.start + self.t_frames) * width].to_vec(),
        )
        .expect("track rows are contiguous");
        let (droot_tp, target_world, valid): (f64, &Pose3D, &[bool]) = match key.kind {
            LabelKind::GroundTruth => (
                track.droot_gt[target],
                &self.gt_world[track.seq_idx][target],
                &self.all_valid,
            ),
            LabelKind::Pseudo => {
                let pf = self.pseudo_world[track.seq_idx][target]
                    .as_ref()
                    .expect("pseudo window keys point at labeled frames");
                (track.droot_pseudo[target], &pf.pose, &pf.valid)
            }
        };
        StepSample {
            input,
            pixel_tp: &track.pixels[target],
            droot_tp,
            camera: &self.cameras[track.camera_idx].camera,
            target_world,
            valid,
        }
    }

    /// Materialize a single labeled frame for the warm start.
    pub fn frame_sample(&self, track_idx: usize, frame: usize) -> StepSample<'_> {
        let track = &self.tracks[track_idx];
        let width = 2 * self.n_joints;
        let input = Tensor::matrix(1, width, track.norm_flat[frame * width..(frame + 1) * width].to_vec())
            .expect("track rows are contiguous");
        StepSample {
            input,
            pixel_tp: &track.pixels[frame],
            droot_tp: track.droot_gt[frame],
            camera: &self.cameras[track.camera_idx].camera,
            target_world: &self.gt_world[track.seq_idx][frame],
            valid: &self.all_valid,
        }
    }
}

/// MSE between the pose lifted from `dhat` (root-relative depths, mm,
/// as a [1 x N_J] tape node) and the target, in the camera frame.
/// Gradients flow through the lifting equation into the depths.
fn pose_loss(
    tape: &mut Tape,
    dhat: NodeId,
    sample: &StepSample<'_>,
) -> Result<NodeId, TrainError> {
    let n_joints = sample.valid.len();
    let k_inv = sample
        .camera
        .intrinsics()
        .inverse()
        .ok_or(GeometryError::SingularIntrinsics)?;

    // Column j of rays is K^-1 (u_j, v_j, 1)^T.
    let mut rays = vec![0.0; 3 * n_joints];
    for (j, &[u, v]) in sample.pixel_tp.joints.iter().enumerate() {
        let ray = k_inv * Vec3::new(u, v, 1.0);
        for r in 0..3 {
            rays[r * n_joints + j] = ray.0[r];
        }
    }
    // Target in the camera frame, transposed to [3 x N_J].
    let mut target = vec![0.0; 3 * n_joints];
    let mut weight = vec![0.0; 3 * n_joints];
    for (j, &p) in sample.target_world.joints.iter().enumerate() {
        let cam_p = sample.camera.world_to_camera(p);
        let w = if sample.valid[j] { 1.0 } else { 0.0 };
        for r in 0..3 {
            target[r * n_joints + j] = cam_p.0[r];
            weight[r * n_joints + j] = w;
        }
    }

    let droot = tape.constant(Tensor::filled(vec![1, n_joints], sample.droot_tp));
    let depth_total = tape.add(dhat, droot)?;
    let ones_col = tape.constant(Tensor::filled(vec![3, 1], 1.0));
    let stacked = tape.matmul(ones_col, depth_total)?; // [3 x N_J], each row the depths
    let pred = tape.mask_mul(stacked, Tensor::matrix(3, n_joints, rays)?)?;
    let loss = tape.mse(
        pred,
        Tensor::matrix(3, n_joints, target)?,
        Tensor::matrix(3, n_joints, weight)?,
    )?;
    Ok(loss)
}

/// Row selector [1 x rows] with a one at `row`.
fn selector(rows: usize, row: usize) -> Tensor {
    let mut data = vec![0.0; rows];
    data[row] = 1.0;
    Tensor::row(data)
}

fn collect_grads(
    tape: &Tape,
    grads: &crate::tape::Gradients,
    ids: &[NodeId],
) -> Vec<Tensor> {
    ids.iter().map(|&id| grads.wrt_or_zeros(id, tape.value(id).shape())).collect()
}

/// Draw the node mask for one window according to the masking mode.
fn draw_node_mask(masking: &MaskingMode, n_nodes: usize, rng: &mut ChaCha8Rng) -> Option<Tensor> {
    match masking {
        MaskingMode::None => None,
        MaskingMode::Structured(set) => {
            let idx = rng.random_range(0..set.len());
            Some(set.mask_column(idx))
        }
        MaskingMode::Bernoulli { rate } => {
            let data = (0..n_nodes)
                .map(|_| if rng.random::<f64>() < *rate { 0.0 } else { 1.0 })
                .collect();
            Some(Tensor::column(data))
        }
    }
}

/// One warm-start step: lifting-net-only MSE on a batch of labeled
/// frames (the refinement parameters are untouched). The batch is
/// stacked into one forward pass, so the weight traffic amortizes.
pub fn warmup_step(
    state: &mut ModelState,
    adam_phi: &mut AdamState,
    ts: &TrainingSet,
    batch: &[(usize, usize)],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    iter: u64,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyLabeledSet);
    }
    let mut tape = Tape::new();
    let bindings = bind_params(&mut tape, state);
    let samples: Vec<StepSample<'_>> =
        batch.iter().map(|&(track, frame)| ts.frame_sample(track, frame)).collect();

    let width = 2 * ts.n_joints;
    let mut stacked = Vec::with_capacity(batch.len() * width);
    for s in &samples {
        stacked.extend_from_slice(s.input.data());
    }
    let input = tape.constant(Tensor::matrix(batch.len(), width, stacked)?);
    let dropout = sample_dropout_masks(&state.lnet_cfg, batch.len(), rng);
    let lifted = lnet_forward_tape(&mut tape, &bindings.phi, &state.lnet_cfg, input, Some(&dropout))?;

    let mut total: Option<NodeId> = None;
    for (row, sample) in samples.iter().enumerate() {
        let pick = tape.constant(selector(batch.len(), row));
        let lifted_row = tape.matmul(pick, lifted)?;
        let loss = pose_loss(&mut tape, lifted_row, sample)?;
        total = Some(match total {
            None => loss,
            Some(acc) => tape.add(acc, loss)?,
        });
    }
    let total = total.expect("batch checked non-empty");
    let mean = tape.mask_mul(total, Tensor::scalar(1.0 / batch.len() as f64))?;
    let loss_value = tape.value(mean).item();
    if !loss_value.is_finite() {
        return Err(TrainError::NonFiniteLoss { iter });
    }
    let grads = tape.backward(mean)?;
    let phi_grads = collect_grads(&tape, &grads, &bindings.phi);
    let names = state.phi_names();
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    adam_phi.step(&mut state.phi_tensors_mut(), &phi_grads, &name_refs, cfg.lr_warmup)?;
    Ok(loss_value)
}

/// One joint step: lift the whole window, refine the target frame under
/// a freshly drawn node mask, and update Phi and Theta through the
/// shared loss with their own optimizers.
#[allow(clippy::too_many_arguments)]
pub fn joint_step(
    state: &mut ModelState,
    adam_phi: &mut AdamState,
    adam_theta: &mut AdamState,
    ts: &TrainingSet,
    batch: &[WindowKey],
    adjacencies: &[NormalizedAdjacency],
    masking: &MaskingMode,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    iter: u64,
) -> Result<f64, TrainError> {
    let t_frames = ts.t_frames;
    let n_nodes = t_frames * ts.n_joints;
    let mut tape = Tape::new();
    let bindings = bind_params(&mut tape, state);
    let mut total: Option<NodeId> = None;
    for &key in batch {
        let sample = ts.window_sample(key);
        let dropout = sample_dropout_masks(&state.lnet_cfg, t_frames, rng);
        let node_mask = draw_node_mask(masking, n_nodes, rng);

        let input = tape.constant(sample.input.clone());
        let lifted = lnet_forward_tape(&mut tape, &bindings.phi, &state.lnet_cfg, input, Some(&dropout))?;

        let column = tape.reshape(lifted, vec![n_nodes, 1])?;
        let features = tape.mask_mul(column, Tensor::filled(vec![n_nodes, 1], DEPTH_FEATURE_SCALE))?;
        let delta = rnet_forward_tape(
            &mut tape,
            &bindings.theta,
            &state.rnet_cfg,
            adjacencies,
            features,
            node_mask.as_ref(),
        )?;

        let pick = tape.constant(selector(t_frames, ts.t_p));
        let lifted_tp = tape.matmul(pick, lifted)?;
        let dhat = tape.add(lifted_tp, delta)?;
        let loss = pose_loss(&mut tape, dhat, &sample)?;
        total = Some(match total {
            None => loss,
            Some(acc) => tape.add(acc, loss)?,
        });
    }
    let total = total.ok_or(TrainError::NoWindows)?;
    let mean = tape.mask_mul(total, Tensor::scalar(1.0 / batch.len() as f64))?;
    let loss_value = tape.value(mean).item();
    if !loss_value.is_finite() {
        return Err(TrainError::NonFiniteLoss { iter });
    }
    let grads = tape.backward(mean)?;

    let phi_grads = collect_grads(&tape, &grads, &bindings.phi);
    let phi_names = state.phi_names();
    let phi_refs: Vec<&str> = phi_names.iter().map(|s| s.as_str()).collect();
    adam_phi.step(&mut state.phi_tensors_mut(), &phi_grads, &phi_refs, cfg.lr_phi)?;

    let theta_grads = collect_grads(&tape, &grads, &bindings.theta);
    let theta_names = state.theta_names();
    let theta_refs: Vec<&str> = theta_names.iter().map(|s| s.as_str()).collect();
    adam_theta.step(&mut state.theta_tensors_mut(), &theta_grads, &theta_refs, cfg.lr_theta)?;
    Ok(loss_value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Joint,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Joint => "joint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub iter: u64,
    pub phase: Phase,
    pub loss: f64,
}

/// Snapshot of everything needed to resume or evaluate a run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelState,
    pub adam_phi: AdamState,
    pub adam_theta: AdamState,
    pub iter: u64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub loss_curve: Vec<LossPoint>,
}

/// Run the full schedule: `warmup_iters` lifting-only steps on labeled
/// frames, then joint steps to `total_iters`. In semi-supervised mode
/// with both pools non-empty, joint batches alternate labeled and
/// pseudo-labeled windows one-to-one.
pub fn run_training(
    ts: &TrainingSet,
    adjacencies: &[NormalizedAdjacency],
    model: ModelState,
    masking: MaskingMode,
    cfg: &TrainConfig,
    mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<(), String>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if cfg.warmup_iters > 0 && ts.warmup_frames.is_empty() {
        return Err(TrainError::EmptyLabeledSet);
    }
    let joint_iters = cfg.total_iters - cfg.warmup_iters;
    let have_labeled = !ts.labeled_windows.is_empty();
    let have_pseudo = !ts.pseudo_windows.is_empty();
    if joint_iters > 0 && !have_labeled && !have_pseudo {
        return Err(TrainError::NoWindows);
    }

    let mut state = model;
    let mut adam_phi = AdamState::for_params(&state.phi_tensors(), AdamHyper::default());
    let mut adam_theta = AdamState::for_params(&state.theta_tensors(), AdamHyper::default());
    let mut rng = seeded(cfg.seed);
    let mut loss_curve = Vec::with_capacity(cfg.total_iters as usize);

    for iter in 1..=cfg.warmup_iters {
        let batch: Vec<(usize, usize)> = (0..cfg.warmup_batch_size)
            .map(|_| ts.warmup_frames[rng.random_range(0..ts.warmup_frames.len())])
            .collect();
        let loss = warmup_step(&mut state, &mut adam_phi, ts, &batch, cfg, &mut rng, iter)?;
        loss_curve.push(LossPoint { iter, phase: Phase::Warmup, loss });
    }

    for iter in cfg.warmup_iters + 1..=cfg.total_iters {
        let use_pseudo = match (have_labeled, have_pseudo) {
            (true, true) => cfg.mode == TrainMode::SemiSupervised && iter % 2 == 0,
            (false, true) => true,
            _ => false,
        };
        let pool = if use_pseudo { &ts.pseudo_windows } else { &ts.labeled_windows };
        let batch: Vec<WindowKey> =
            (0..cfg.batch_size).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        let loss = joint_step(
            &mut state,
            &mut adam_phi,
            &mut adam_theta,
            ts,
            &batch,
            adjacencies,
            &masking,
            cfg,
            &mut rng,
            iter,
        )?;
        loss_curve.push(LossPoint { iter, phase: Phase::Joint, loss });

        if cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0 && iter != cfg.total_iters {
            let cp = Checkpoint {
                model: state.clone(),
                adam_phi: adam_phi.clone(),
                adam_theta: adam_theta.clone(),
                iter,
            };
            on_checkpoint(&cp).map_err(TrainError::Sink)?;
        }
    }

    let checkpoint =
        Checkpoint { model: state, adam_phi, adam_theta, iter: cfg.total_iters };
    on_checkpoint(&checkpoint).map_err(TrainError::Sink)?;
    Ok(TrainOutcome { checkpoint, loss_curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, normalize};
    use crate::metrics::{mpjpe, EvalPair};
    use crate::nets::{LNetConfig, RNetConfig};
    use crate::synth::{generate_dataset, SynthConfig};

    fn tiny_dataset(labeled_fraction: f64, n_frames: usize) -> Dataset {
        generate_dataset(&SynthConfig {
            n_train_sequences: 1,
            n_test_sequences: 0,
            n_frames,
            n_cameras: 4,
            noise_px: 0.0,
            occlusion_rate: 0.0,
            labeled_fraction,
            n_joints: 17,
            seed: 42,
        })
        .unwrap()
    }

    fn tiny_model(t_frames: usize, n_relations: usize, t_p: usize, seed: u64) -> ModelState {
        let lnet = LNetConfig { n_joints: 17, hidden_size: 32, n_hidden: 2, dropout_rate: 0.1 };
        let rnet = RNetConfig {
            t_frames,
            n_joints: 17,
            n_relations,
            gcn_hidden: (4, 8),
            gcn_out: 8,
            t_p,
        };
        ModelState::init(lnet, rnet, seed).unwrap()
    }

    #[test]
    fn warmup_with_empty_labeled_set_is_an_error() {
        let ds = tiny_dataset(0.0, 40);
        let ts = build_training_set(&ds, 5, 2, TrainMode::Supervised).unwrap();
        let graph = build_graph(&ds.skeleton, 5, &[1]).unwrap();
        let adjs = normalize(&graph);
        let model = tiny_model(5, adjs.len(), 2, 0);
        let cfg = TrainConfig { warmup_iters: 10, total_iters: 10, ..TrainConfig::default() };
        let err = run_training(&ts, &adjs, model, MaskingMode::None, &cfg, |_| Ok(())).unwrap_err();
        assert_eq!(err, TrainError::EmptyLabeledSet);
    }

    #[test]
    fn training_is_bit_identical_across_reruns() {
        let ds = tiny_dataset(1.0, 30);
        let ts = build_training_set(&ds, 5, 2, TrainMode::Supervised).unwrap();
        let graph = build_graph(&ds.skeleton, 5, &[1, 2]).unwrap();
        let adjs = normalize(&graph);
        let cfg = TrainConfig { warmup_iters: 4, total_iters: 10, seed: 9, ..TrainConfig::default() };
        let run = || {
            let model = tiny_model(5, adjs.len(), 2, 7);
            run_training(&ts, &adjs, model, MaskingMode::None, &cfg, |_| Ok(())).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.loss_curve.len(), b.loss_curve.len());
        for (x, y) in a.loss_curve.iter().zip(&b.loss_curve) {
            assert_eq!(x.loss.to_bits(), y.loss.to_bits());
        }
        for (ta, tb) in a.checkpoint.model.phi_tensors().iter().zip(b.checkpoint.model.phi_tensors()) {
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn total_equal_to_warmup_runs_no_joint_phase() {
        let ds = tiny_dataset(1.0, 20);
        let ts = build_training_set(&ds, 5, 2, TrainMode::Supervised).unwrap();
        let graph = build_graph(&ds.skeleton, 5, &[1]).unwrap();
        let adjs = normalize(&graph);
        let model = tiny_model(5, adjs.len(), 2, 3);
        let theta_before: Vec<Vec<f64>> =
            model.theta_tensors().iter().map(|t| t.data().to_vec()).collect();
        let cfg = TrainConfig { warmup_iters: 6, total_iters: 6, seed: 1, ..TrainConfig::default() };
        let out = run_training(&ts, &adjs, model, MaskingMode::None, &cfg, |_| Ok(())).unwrap();
        assert!(out.loss_curve.iter().all(|p| p.phase == Phase::Warmup));
        for (after, before) in out.checkpoint.model.theta_tensors().iter().zip(&theta_before) {
            assert_eq!(after.data(), before.as_slice(), "theta must be untouched by warmup");
        }
    }

    /// Memorization oracle: a handful of clean frames must be fitted to
    /// a few millimetres by the warm start alone. Full-batch steps with
    /// dropout off so the per-step loss is the actual training loss.
    #[test]
    fn warmup_overfits_ten_clean_frames() {
        let ds = tiny_dataset(1.0, 10);
        let mut ts = build_training_set(&ds, 5, 2, TrainMode::Supervised).unwrap();
        // Single view keeps the fit small-scale.
        ts.warmup_frames.retain(|&(track, _)| track == 0);
        let graph = build_graph(&ds.skeleton, 5, &[1]).unwrap();
        let adjs = normalize(&graph);
        let lnet = LNetConfig { n_joints: 17, hidden_size: 32, n_hidden: 2, dropout_rate: 0.0 };
        let rnet = RNetConfig {
            t_frames: 5,
            n_joints: 17,
            n_relations: adjs.len(),
            gcn_hidden: (4, 8),
            gcn_out: 8,
            t_p: 2,
        };
        let mut state = ModelState::init(lnet, rnet, 11).unwrap();
        let cfg = TrainConfig { warmup_iters: 2000, total_iters: 2000, seed: 2, ..TrainConfig::default() };
        let mut adam_phi =
            crate::optim::AdamState::for_params(&state.phi_tensors(), AdamHyper::default());
        let mut rng = seeded(cfg.seed);
        let batch = ts.warmup_frames.clone();
        let mut losses = Vec::with_capacity(2000);
        for iter in 1..=2000 {
            losses.push(
                warmup_step(&mut state, &mut adam_phi, &ts, &batch, &cfg, &mut rng, iter).unwrap(),
            );
        }
        let out = TrainOutcome {
            checkpoint: Checkpoint {
                model: state,
                adam_phi,
                adam_theta: crate::optim::AdamState::new(&[], AdamHyper::default()),
                iter: 2000,
            },
            loss_curve: Vec::new(),
        };
        let non_increasing = losses.windows(2).filter(|w| w[1] <= w[0] * (1.0 + 1e-9)).count();
        let total = losses.len() - 1;
        assert!(
            non_increasing as f64 / total as f64 >= 0.9,
            "loss not non-increasing often enough: {non_increasing}/{total} steps"
        );

        // Training MPJPE of the lifting net on those frames.
        let state = &out.checkpoint.model;
        let mut pairs = Vec::new();
        for &(t_idx, f) in &ts.warmup_frames {
            let sample = ts.frame_sample(t_idx, f);
            let track = &ts.tracks[t_idx];
            let norm = crate::geometry::Pose2D::all_visible(
                (0..17).map(|j| {
                    [sample.input.data()[2 * j], sample.input.data()[2 * j + 1]]
                }).collect(),
            );
            let depths = crate::nets::lnet_forward(state, &norm).unwrap();
            let depth = crate::geometry::DepthDecomposition {
                d_root: sample.droot_tp,
                d_rel: depths,
            };
            let (cam_pose, _) =
                crate::geometry::backproject(sample.camera, sample.pixel_tp, &depth).unwrap();
            let gt_cam = Pose3D::new(
                sample.target_world.joints.iter().map(|&p| sample.camera.world_to_camera(p)).collect(),
                CoordFrame::Camera,
            );
            pairs.push(EvalPair::all_valid(cam_pose, gt_cam));
        }
        let err = mpjpe(&pairs).unwrap();
        assert!(err < 5.0, "overfit MPJPE {err} mm");
    }

    /// Convergence smoke: joint training on a small clean set reduces
    /// the loss, median over seeds.
    #[test]
    fn joint_phase_reduces_loss_on_toy_set() {
        let ds = tiny_dataset(1.0, 24);
        let ts = build_training_set(&ds, 5, 2, TrainMode::Supervised).unwrap();
        let graph = build_graph(&ds.skeleton, 5, &[1, 2]).unwrap();
        let adjs = normalize(&graph);
        let mut improvements = Vec::new();
        for seed in 0..5u64 {
            let model = tiny_model(5, adjs.len(), 2, seed);
            let cfg = TrainConfig {
                warmup_iters: 150,
                total_iters: 650,
                lr_warmup: 1e-3,
                lr_phi: 5e-4,
                lr_theta: 1e-3,
                seed,
                ..TrainConfig::default()
            };
            let out = run_training(&ts, &adjs, model, MaskingMode::None, &cfg, |_| Ok(())).unwrap();
            let joint: Vec<f64> = out
                .loss_curve
                .iter()
                .filter(|p| p.phase == Phase::Joint)
                .map(|p| p.loss)
                .collect();
            let head: f64 = joint[..50].iter().sum::<f64>() / 50.0;
            let tail: f64 = joint[joint.len() - 50..].iter().sum::<f64>() / 50.0;
            improvements.push(tail < head);
        }
        let wins = improvements.iter().filter(|&&w| w).count();
        assert!(wins >= 3, "joint loss decreased in only {wins}/5 seeds");
    }

    #[test]
    fn pseudo_labels_match_ground_truth_on_noiseless_views() {
        let ds = tiny_dataset(0.1, 40);
        let mut report = PseudoLabelReport::default();
        let pseudo = pseudo_label_frames(&ds, &mut report).unwrap();
        assert!(report.frames_labeled > 0);
        assert_eq!(report.frames_without_root, 0);
        for (seq, frames) in ds.sequences.iter().zip(&pseudo) {
            for (f, slot) in frames.iter().enumerate() {
                let Some(pf) = slot else { continue };
                assert!(!seq.labeled[f]);
                for (got, want) in pf.pose.joints.iter().zip(&seq.frames_world[f].joints) {
                    assert!((*got - *want).norm() < 1e-6, "pseudo-label error");
                }
            }
        }
    }

    #[test]
    fn single_camera_yields_no_pseudo_labels() {
        let ds = generate_dataset(&SynthConfig {
            n_train_sequences: 1,
            n_test_sequences: 0,
            n_frames: 20,
            n_cameras: 1,
            noise_px: 0.0,
            occlusion_rate: 0.0,
            labeled_fraction: 0.0,
            n_joints: 17,
            seed: 1,
        })
        .unwrap();
        let mut report = PseudoLabelReport::default();
        let pseudo = pseudo_label_frames(&ds, &mut report).unwrap();
        assert_eq!(report.frames_labeled, 0);
        assert_eq!(report.frames_without_root, report.frames_attempted);
        assert!(pseudo[0].iter().all(|p| p.is_none()));
    }

    #[test]
    fn occluded_joints_are_excluded_from_pseudo_labels() {
        // Hide joint 3 from all but one camera on every frame.
        let mut ds = tiny_dataset(0.0, 12);
        for seq in &mut ds.sequences {
            for view in &mut seq.views[1..] {
                for frame in &mut view.frames {
                    frame.visibility[3] = false;
                }
            }
        }
        let mut report = PseudoLabelReport::default();
        let pseudo = pseudo_label_frames(&ds, &mut report).unwrap();
        assert!(report.joints_excluded >= 12);
        for frames in &pseudo {
            for slot in frames.iter().flatten() {
                assert!(!slot.valid[3]);
                assert!(slot.valid[0]);
            }
        }
    }

    #[test]
    fn windows_shorter_than_t_are_skipped() {
        let ds = tiny_dataset(1.0, 4);
        let ts = build_training_set(&ds, 5, 2, TrainMode::Supervised).unwrap();
        assert!(ts.labeled_windows.is_empty());
        assert!(!ts.warmup_frames.is_empty());
    }

    #[test]
    fn zero_loss_when_label_equals_model_output() {
        // Construct a sample whose target already equals the refined
        // prediction: loss and gradients must vanish.
        let ds = tiny_dataset(1.0, 10);
        let ts = build_training_set(&ds, 5, 2, TrainMode::Supervised).unwrap();
        let graph = build_graph(&ds.skeleton, 5, &[1]).unwrap();
        let adjs = normalize(&graph);
        let state = tiny_model(5, adjs.len(), 2, 21);

        let key = ts.labeled_windows[0];
        let sample = ts.window_sample(key);
        let mut tape = Tape::new();
        let bindings = bind_params(&mut tape, &state);
        let input = tape.constant(sample.input.clone());
        let lifted = lnet_forward_tape(&mut tape, &bindings.phi, &state.lnet_cfg, input, None).unwrap();
        let column = tape.reshape(lifted, vec![85, 1]).unwrap();
        let features = tape.mask_mul(column, Tensor::filled(vec![85, 1], DEPTH_FEATURE_SCALE)).unwrap();
        let delta = rnet_forward_tape(&mut tape, &bindings.theta, &state.rnet_cfg, &adjs, features, None)
            .unwrap();
        let pick = tape.constant(selector(5, 2));
        let lifted_tp = tape.matmul(pick, lifted).unwrap();
        let dhat = tape.add(lifted_tp, delta).unwrap();

        // Use the model's own backprojection as the label.
        let depth = crate::geometry::DepthDecomposition {
            d_root: sample.droot_tp,
            d_rel: tape.value(dhat).data().to_vec(),
        };
        let (_, world) = crate::geometry::backproject(sample.camera, sample.pixel_tp, &depth).unwrap();
        let self_sample = StepSample { target_world: &world, ..ts.window_sample(key) };
        let loss = pose_loss(&mut tape, dhat, &self_sample).unwrap();
        assert!(tape.value(loss).item() < 1e-18);
        let grads = tape.backward(loss).unwrap();
        for &id in bindings.phi.iter().chain(&bindings.theta) {
            let g = grads.wrt_or_zeros(id, tape.value(id).shape());
            assert!(g.data().iter().all(|&v| v.abs() < 1e-9));
        }
    }
}
