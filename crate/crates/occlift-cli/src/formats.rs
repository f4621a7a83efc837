//! JSON wire formats. Every document carries a `format_version`;
//! loaders reject unknown versions explicitly. Floats go through
//! serde_json's shortest-round-trip printer, so write/read cycles are
//! lossless bit-for-bit.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use occlift_core::config::{ExperimentConfig, MaskingSpec};
use occlift_core::geometry::{Camera, CoordFrame, Pose2D, Pose3D};
use occlift_core::linalg::{Mat3, Vec3};
use occlift_core::masks::{MaskParams, MaskSet};
use occlift_core::metrics::MetricReport;
use occlift_core::nets::{LNetConfig, ModelState, RNetConfig};
use occlift_core::optim::{AdamHyper, AdamState};
use occlift_core::skeleton::Skeleton;
use occlift_core::synth::{
    Dataset, OcclusionEvent, OcclusionScript, RigCamera, SequenceData, Subset, ViewDetections,
};
use occlift_core::tensor::Tensor;
use occlift_core::training::{Checkpoint, TrainConfig, TrainMode};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("malformed {}: {e}", path.display())))
}

/// Serialize and write atomically: temp file in the target directory,
/// then rename over the destination.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(format!("cannot serialize {}: {e}", path.display())))?;
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::io(format!("cannot finalize {}: {e}", path.display())))?;
    Ok(())
}

fn check_version(found: u32, what: &str) -> Result<(), CliError> {
    if found != FORMAT_VERSION {
        return Err(CliError::config(format!(
            "unsupported {what} format_version {found}, this build reads version {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- dataset

#[derive(Serialize, Deserialize)]
pub struct SkeletonFile {
    pub n_joints: usize,
    pub names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    pub root_index: usize,
}

impl SkeletonFile {
    pub fn from_core(s: &Skeleton) -> Self {
        Self {
            n_joints: s.n_joints(),
            names: s.names().to_vec(),
            edges: s.edges().to_vec(),
            root_index: s.root_index(),
        }
    }

    pub fn to_core(&self) -> Result<Skeleton, CliError> {
        if self.names.len() != self.n_joints {
            return Err(CliError::config(format!(
                "skeleton lists {} names for {} joints",
                self.names.len(),
                self.n_joints
            )));
        }
        Ok(Skeleton::new(self.names.clone(), self.edges.clone(), self.root_index)?)
    }
}

#[derive(Serialize, Deserialize)]
pub struct CameraFile {
    pub id: String,
    /// Row-major 3x3.
    pub k: [f64; 9],
    pub r: [f64; 9],
    pub t: [f64; 3],
    pub width: f64,
    pub height: f64,
}

fn mat3_to_flat(m: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for (i, row) in m.0.iter().enumerate() {
        out[3 * i..3 * i + 3].copy_from_slice(row);
    }
    out
}

fn mat3_from_flat(f: &[f64; 9]) -> Mat3 {
    Mat3([[f[0], f[1], f[2]], [f[3], f[4], f[5]], [f[6], f[7], f[8]]])
}

impl CameraFile {
    pub fn from_core(rig: &RigCamera) -> Self {
        Self {
            id: rig.camera.id.clone(),
            k: mat3_to_flat(rig.camera.intrinsics()),
            r: mat3_to_flat(rig.camera.rotation()),
            t: rig.camera.translation().0,
            width: rig.width,
            height: rig.height,
        }
    }

    pub fn to_core(&self) -> Result<RigCamera, CliError> {
        let camera = Camera::new(
            self.id.clone(),
            mat3_from_flat(&self.k),
            mat3_from_flat(&self.r),
            Vec3(self.t),
        )?;
        Ok(RigCamera { camera, width: self.width, height: self.height })
    }
}

#[derive(Serialize, Deserialize)]
pub struct OcclusionEventFile {
    pub camera: usize,
    pub joints: Vec<usize>,
    pub start: usize,
    pub duration: usize,
}

#[derive(Serialize, Deserialize)]
pub struct ViewFile {
    pub camera: usize,
    /// [frame][joint][2] pixel detections.
    pub detections: Vec<Vec<[f64; 2]>>,
    pub visibility: Vec<Vec<bool>>,
}

#[derive(Serialize, Deserialize)]
pub struct SequenceFile {
    pub id: String,
    pub subset: String,
    pub fps: f64,
    pub labeled: Vec<bool>,
    /// [frame][joint][3] world coordinates in mm.
    pub frames_world: Vec<Vec<[f64; 3]>>,
    pub views: Vec<ViewFile>,
    #[serde(default)]
    pub occlusions: Vec<OcclusionEventFile>,
}

#[derive(Serialize, Deserialize)]
pub struct DatasetFile {
    pub format_version: u32,
    pub skeleton: SkeletonFile,
    pub cameras: Vec<CameraFile>,
    pub sequences: Vec<SequenceFile>,
}

impl DatasetFile {
    pub fn from_core(ds: &Dataset) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            skeleton: SkeletonFile::from_core(&ds.skeleton),
            cameras: ds.cameras.iter().map(CameraFile::from_core).collect(),
            sequences: ds
                .sequences
                .iter()
                .map(|seq| SequenceFile {
                    id: seq.id.clone(),
                    subset: match seq.subset {
                        Subset::Train => "train".into(),
                        Subset::Test => "test".into(),
                    },
                    fps: seq.fps,
                    labeled: seq.labeled.clone(),
                    frames_world: seq
                        .frames_world
                        .iter()
                        .map(|p| p.joints.iter().map(|v| v.0).collect())
                        .collect(),
                    views: seq
                        .views
                        .iter()
                        .map(|v| ViewFile {
                            camera: v.camera_index,
                            detections: v.frames.iter().map(|f| f.joints.clone()).collect(),
                            visibility: v.frames.iter().map(|f| f.visibility.clone()).collect(),
                        })
                        .collect(),
                    occlusions: seq
                        .script
                        .events
                        .iter()
                        .map(|e| OcclusionEventFile {
                            camera: e.camera,
                            joints: e.joints.clone(),
                            start: e.start,
                            duration: e.duration,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_core(&self) -> Result<Dataset, CliError> {
        check_version(self.format_version, "dataset")?;
        let skeleton = self.skeleton.to_core()?;
        let cameras: Vec<RigCamera> =
            self.cameras.iter().map(|c| c.to_core()).collect::<Result<_, _>>()?;
        if cameras.is_empty() {
            return Err(CliError::config("dataset has no cameras"));
        }
        let nj = skeleton.n_joints();
        let mut sequences = Vec::with_capacity(self.sequences.len());
        for seq in &self.sequences {
            let subset = match seq.subset.as_str() {
                "train" => Subset::Train,
                "test" => Subset::Test,
                other => {
                    return Err(CliError::config(format!(
                        "sequence {}: unknown subset '{other}'",
                        seq.id
                    )))
                }
            };
            let n_frames = seq.frames_world.len();
            if seq.labeled.len() != n_frames {
                return Err(CliError::config(format!(
                    "sequence {}: {} labeled flags for {} frames",
                    seq.id,
                    seq.labeled.len(),
                    n_frames
                )));
            }
            let frames_world = seq
                .frames_world
                .iter()
                .enumerate()
                .map(|(f, joints)| {
                    if joints.len() != nj {
                        return Err(CliError::config(format!(
                            "sequence {} frame {f}: {} joints, skeleton has {nj}",
                            seq.id,
                            joints.len()
                        )));
                    }
                    Ok(Pose3D::new(joints.iter().map(|&c| Vec3(c)).collect(), CoordFrame::World))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let views = seq
                .views
                .iter()
                .map(|v| {
                    if v.camera >= cameras.len() {
                        return Err(CliError::config(format!(
                            "sequence {}: view references camera {} of {}",
                            seq.id,
                            v.camera,
                            cameras.len()
                        )));
                    }
                    if v.detections.len() != n_frames || v.visibility.len() != n_frames {
                        return Err(CliError::config(format!(
                            "sequence {}: view frame count mismatch",
                            seq.id
                        )));
                    }
                    let frames = v
                        .detections
                        .iter()
                        .zip(&v.visibility)
                        .map(|(d, vis)| Pose2D::new(d.clone(), vis.clone()))
                        .collect();
                    Ok(ViewDetections { camera_index: v.camera, frames })
                })
                .collect::<Result<Vec<_>, _>>()?;
            sequences.push(SequenceData {
                id: seq.id.clone(),
                subset,
                fps: seq.fps,
                frames_world,
                labeled: seq.labeled.clone(),
                views,
                script: OcclusionScript {
                    events: seq
                        .occlusions
                        .iter()
                        .map(|e| OcclusionEvent {
                            camera: e.camera,
                            joints: e.joints.clone(),
                            start: e.start,
                            duration: e.duration,
                        })
                        .collect(),
                },
            });
        }
        Ok(Dataset { skeleton, cameras, sequences })
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    read_json::<DatasetFile>(path)?.to_core()
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), CliError> {
    write_json_atomic(path, &DatasetFile::from_core(ds))
}

// ----------------------------------------------------------- experiment config

#[derive(Serialize, Deserialize, Clone)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MaskingFile {
    None,
    Structured { n_masks: usize, alpha: f64 },
    Bernoulli { rate: f64 },
}

impl MaskingFile {
    pub fn from_core(m: &MaskingSpec) -> Self {
        match m {
            MaskingSpec::None => MaskingFile::None,
            MaskingSpec::Structured { n_masks, alpha } => {
                MaskingFile::Structured { n_masks: *n_masks, alpha: *alpha }
            }
            MaskingSpec::Bernoulli { rate } => MaskingFile::Bernoulli { rate: *rate },
        }
    }

    pub fn to_core(&self) -> MaskingSpec {
        match self {
            MaskingFile::None => MaskingSpec::None,
            MaskingFile::Structured { n_masks, alpha } => {
                MaskingSpec::Structured { n_masks: *n_masks, alpha: *alpha }
            }
            MaskingFile::Bernoulli { rate } => MaskingSpec::Bernoulli { rate: *rate },
        }
    }
}

#[derive(Serialize, Deserialize, Clone)]
pub struct TrainConfigFile {
    pub warmup_iters: u64,
    pub lr_warmup: f64,
    pub lr_phi: f64,
    pub lr_theta: f64,
    pub batch_size: usize,
    #[serde(default = "default_warmup_batch")]
    pub warmup_batch_size: usize,
    pub total_iters: u64,
    pub seed: u64,
    pub mode: String,
    #[serde(default)]
    pub checkpoint_every: u64,
}

fn default_warmup_batch() -> usize {
    occlift_core::training::TrainConfig::default().warmup_batch_size
}

impl TrainConfigFile {
    pub fn from_core(c: &TrainConfig) -> Self {
        Self {
            warmup_iters: c.warmup_iters,
            lr_warmup: c.lr_warmup,
            lr_phi: c.lr_phi,
            lr_theta: c.lr_theta,
            batch_size: c.batch_size,
            warmup_batch_size: c.warmup_batch_size,
            total_iters: c.total_iters,
            seed: c.seed,
            mode: match c.mode {
                TrainMode::Supervised => "supervised".into(),
                TrainMode::SemiSupervised => "semi_supervised".into(),
            },
            checkpoint_every: c.checkpoint_every,
        }
    }

    pub fn to_core(&self) -> Result<TrainConfig, CliError> {
        let mode = match self.mode.as_str() {
            "supervised" => TrainMode::Supervised,
            "semi_supervised" => TrainMode::SemiSupervised,
            other => return Err(CliError::config(format!("unknown training mode '{other}'"))),
        };
        Ok(TrainConfig {
            warmup_iters: self.warmup_iters,
            lr_warmup: self.lr_warmup,
            lr_phi: self.lr_phi,
            lr_theta: self.lr_theta,
            batch_size: self.batch_size,
            warmup_batch_size: self.warmup_batch_size,
            total_iters: self.total_iters,
            seed: self.seed,
            mode,
            checkpoint_every: self.checkpoint_every,
        })
    }
}

#[derive(Serialize, Deserialize, Clone)]
pub struct ExperimentConfigFile {
    pub t_frames: usize,
    pub t_p: usize,
    pub strides: Vec<usize>,
    pub masking: MaskingFile,
    pub lnet_hidden: usize,
    pub lnet_layers: usize,
    pub lnet_dropout: f64,
    pub gcn_hidden: (usize, usize),
    pub gcn_out: usize,
    pub train: TrainConfigFile,
    pub eval_window_stride: usize,
}

impl ExperimentConfigFile {
    pub fn from_core(c: &ExperimentConfig) -> Self {
        Self {
            t_frames: c.t_frames,
            t_p: c.t_p,
            strides: c.strides.clone(),
            masking: MaskingFile::from_core(&c.masking),
            lnet_hidden: c.lnet_hidden,
            lnet_layers: c.lnet_layers,
            lnet_dropout: c.lnet_dropout,
            gcn_hidden: c.gcn_hidden,
            gcn_out: c.gcn_out,
            train: TrainConfigFile::from_core(&c.train),
            eval_window_stride: c.eval_window_stride,
        }
    }

    pub fn to_core(&self) -> Result<ExperimentConfig, CliError> {
        let cfg = ExperimentConfig {
            t_frames: self.t_frames,
            t_p: self.t_p,
            strides: self.strides.clone(),
            masking: self.masking.to_core(),
            lnet_hidden: self.lnet_hidden,
            lnet_layers: self.lnet_layers,
            lnet_dropout: self.lnet_dropout,
            gcn_hidden: self.gcn_hidden,
            gcn_out: self.gcn_out,
            train: self.train.to_core()?,
            eval_window_stride: self.eval_window_stride,
        };
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------- mask set

#[derive(Serialize, Deserialize)]
pub struct MaskParamsFile {
    pub n_masks: usize,
    pub alpha: f64,
    pub t_frames: usize,
    pub n_joints: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
pub struct MaskSetFile {
    pub format_version: u32,
    pub params: MaskParamsFile,
    /// Indices of the set bits of each mask.
    pub masks: Vec<Vec<usize>>,
}

impl MaskSetFile {
    pub fn from_core(set: &MaskSet) -> Self {
        let p = set.params();
        Self {
            format_version: FORMAT_VERSION,
            params: MaskParamsFile {
                n_masks: p.n_masks,
                alpha: p.alpha,
                t_frames: p.t_frames,
                n_joints: p.n_joints,
                seed: p.seed,
            },
            masks: set
                .masks()
                .iter()
                .map(|m| m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect())
                .collect(),
        }
    }

    pub fn to_core(&self) -> Result<MaskSet, CliError> {
        check_version(self.format_version, "mask set")?;
        let params = MaskParams {
            n_masks: self.params.n_masks,
            alpha: self.params.alpha,
            t_frames: self.params.t_frames,
            n_joints: self.params.n_joints,
            seed: self.params.seed,
        };
        if self.masks.len() != params.n_masks {
            return Err(CliError::config(format!(
                "mask set stores {} masks, params say {}",
                self.masks.len(),
                params.n_masks
            )));
        }
        let set = MaskSet::from_set_bits(params, &self.masks)?;
        let beta = params.beta();
        for (i, m) in set.masks().iter().enumerate() {
            let pop = m.iter().filter(|&&b| b).count();
            if pop != beta {
                return Err(CliError::config(format!("mask {i} has popcount {pop}, expected beta {beta}")));
            }
        }
        Ok(set)
    }
}

// --------------------------------------------------------------- checkpoint

#[derive(Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct AdamMoments {
    pub name: String,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct AdamStateFile {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub moments: Vec<AdamMoments>,
}

#[derive(Serialize, Deserialize)]
pub struct LNetConfigFile {
    pub n_joints: usize,
    pub hidden_size: usize,
    pub n_hidden: usize,
    pub dropout_rate: f64,
}

#[derive(Serialize, Deserialize)]
pub struct RNetConfigFile {
    pub t_frames: usize,
    pub n_joints: usize,
    pub n_relations: usize,
    pub gcn_hidden: (usize, usize),
    pub gcn_out: usize,
    pub t_p: usize,
}

#[derive(Serialize, Deserialize)]
pub struct CheckpointFile {
    pub format_version: u32,
    pub seed: u64,
    pub iter: u64,
    pub lnet_config: LNetConfigFile,
    pub rnet_config: RNetConfigFile,
    /// Temporal strides of the window graph the model was trained on;
    /// needed to rebuild the adjacencies at evaluation time.
    pub strides: Vec<usize>,
    pub params: Vec<NamedArray>,
    pub adam_phi: AdamStateFile,
    pub adam_theta: AdamStateFile,
}

fn adam_to_file(names: &[String], state: &AdamState) -> AdamStateFile {
    let (m, v) = state.moments();
    AdamStateFile {
        step: state.step_count(),
        beta1: state.hyper().beta1,
        beta2: state.hyper().beta2,
        eps: state.hyper().eps,
        moments: names
            .iter()
            .zip(m.iter().zip(v))
            .map(|(name, (m, v))| AdamMoments {
                name: name.clone(),
                m: m.data().to_vec(),
                v: v.data().to_vec(),
            })
            .collect(),
    }
}

fn adam_from_file(
    file: &AdamStateFile,
    expected: &[(&String, &[usize])],
) -> Result<AdamState, CliError> {
    if file.moments.len() != expected.len() {
        return Err(CliError::config(format!(
            "optimizer state stores {} moment pairs, architecture has {} parameters",
            file.moments.len(),
            expected.len()
        )));
    }
    let mut ms = Vec::with_capacity(expected.len());
    let mut vs = Vec::with_capacity(expected.len());
    for (stored, (name, shape)) in file.moments.iter().zip(expected) {
        if &stored.name != *name {
            return Err(CliError::config(format!(
                "optimizer moment '{}' does not match parameter '{name}'",
                stored.name
            )));
        }
        let len: usize = shape.iter().product();
        if stored.m.len() != len || stored.v.len() != len {
            return Err(CliError::config(format!("moment '{}' length mismatch", stored.name)));
        }
        ms.push(Tensor::from_vec(shape.to_vec(), stored.m.clone()).map_err(|e| CliError::config(e.to_string()))?);
        vs.push(Tensor::from_vec(shape.to_vec(), stored.v.clone()).map_err(|e| CliError::config(e.to_string()))?);
    }
    Ok(AdamState::from_moments(
        ms,
        vs,
        file.step,
        AdamHyper { beta1: file.beta1, beta2: file.beta2, eps: file.eps },
    ))
}

impl CheckpointFile {
    pub fn from_core(cp: &Checkpoint, strides: &[usize]) -> Self {
        let model = &cp.model;
        let names: Vec<String> =
            model.phi_names().into_iter().chain(model.theta_names()).collect();
        let tensors: Vec<&Tensor> =
            model.phi_tensors().into_iter().chain(model.theta_tensors()).collect();
        Self {
            format_version: FORMAT_VERSION,
            seed: model.seed,
            iter: cp.iter,
            strides: strides.to_vec(),
            lnet_config: LNetConfigFile {
                n_joints: model.lnet_cfg.n_joints,
                hidden_size: model.lnet_cfg.hidden_size,
                n_hidden: model.lnet_cfg.n_hidden,
                dropout_rate: model.lnet_cfg.dropout_rate,
            },
            rnet_config: RNetConfigFile {
                t_frames: model.rnet_cfg.t_frames,
                n_joints: model.rnet_cfg.n_joints,
                n_relations: model.rnet_cfg.n_relations,
                gcn_hidden: model.rnet_cfg.gcn_hidden,
                gcn_out: model.rnet_cfg.gcn_out,
                t_p: model.rnet_cfg.t_p,
            },
            params: names
                .iter()
                .zip(&tensors)
                .map(|(name, t)| NamedArray {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
            adam_phi: adam_to_file(&model.phi_names(), &cp.adam_phi),
            adam_theta: adam_to_file(&model.theta_names(), &cp.adam_theta),
        }
    }

    /// Rebuild the checkpoint, validating every array shape against the
    /// architecture the configs describe.
    pub fn to_core(&self) -> Result<Checkpoint, CliError> {
        check_version(self.format_version, "checkpoint")?;
        let lnet_cfg = LNetConfig {
            n_joints: self.lnet_config.n_joints,
            hidden_size: self.lnet_config.hidden_size,
            n_hidden: self.lnet_config.n_hidden,
            dropout_rate: self.lnet_config.dropout_rate,
        };
        let rnet_cfg = RNetConfig {
            t_frames: self.rnet_config.t_frames,
            n_joints: self.rnet_config.n_joints,
            n_relations: self.rnet_config.n_relations,
            gcn_hidden: self.rnet_config.gcn_hidden,
            gcn_out: self.rnet_config.gcn_out,
            t_p: self.rnet_config.t_p,
        };
        // Template with the right shapes for validation.
        let mut model = ModelState::init(lnet_cfg, rnet_cfg, self.seed)
            .map_err(|e| CliError::config(e.to_string()))?;

        let phi_count = model.phi_names().len();
        let theta_count = model.theta_names().len();
        if self.params.len() != phi_count + theta_count {
            return Err(CliError::config(format!(
                "checkpoint stores {} parameter arrays, architecture has {}",
                self.params.len(),
                phi_count + theta_count
            )));
        }
        let assign = |stored: &NamedArray, name: &String, slot: &mut Tensor| -> Result<(), CliError> {
            if &stored.name != name {
                return Err(CliError::config(format!(
                    "checkpoint parameter '{}' does not match expected '{name}'",
                    stored.name
                )));
            }
            if stored.shape != slot.shape() {
                return Err(CliError::config(format!(
                    "parameter '{}' has shape {:?}, architecture expects {:?}",
                    stored.name,
                    stored.shape,
                    slot.shape()
                )));
            }
            *slot = Tensor::from_vec(stored.shape.clone(), stored.data.clone())
                .map_err(|e| CliError::config(e.to_string()))?;
            Ok(())
        };
        let (phi_stored, theta_stored) = self.params.split_at(phi_count);
        let phi_names = model.phi_names();
        for ((stored, name), slot) in
            phi_stored.iter().zip(&phi_names).zip(model.phi_tensors_mut())
        {
            assign(stored, name, slot)?;
        }
        let theta_names = model.theta_names();
        for ((stored, name), slot) in
            theta_stored.iter().zip(&theta_names).zip(model.theta_tensors_mut())
        {
            assign(stored, name, slot)?;
        }

        let phi_shapes: Vec<(&String, &[usize])> = phi_names
            .iter()
            .zip(model.phi_tensors())
            .map(|(n, t)| (n, t.shape()))
            .collect();
        let adam_phi = adam_from_file(&self.adam_phi, &phi_shapes)?;
        let theta_shapes: Vec<(&String, &[usize])> = theta_names
            .iter()
            .zip(model.theta_tensors())
            .map(|(n, t)| (n, t.shape()))
            .collect();
        let adam_theta = adam_from_file(&self.adam_theta, &theta_shapes)?;

        Ok(Checkpoint { model, adam_phi, adam_theta, iter: self.iter })
    }
}

pub fn read_checkpoint(path: &Path) -> Result<(Checkpoint, Vec<usize>), CliError> {
    let file: CheckpointFile = read_json(path)?;
    let strides = file.strides.clone();
    let expected_relations = strides.len() + 1;
    if file.rnet_config.n_relations != expected_relations {
        return Err(CliError::config(format!(
            "checkpoint lists {} strides but {} relations",
            strides.len(),
            file.rnet_config.n_relations
        )));
    }
    Ok((file.to_core()?, strides))
}

pub fn write_checkpoint(path: &Path, cp: &Checkpoint, strides: &[usize]) -> Result<(), CliError> {
    // Compact encoding: checkpoints are large and pretty-printing them
    // doubles the file size.
    let text = serde_json::to_string(&CheckpointFile::from_core(cp, strides))
        .map_err(|e| CliError::io(format!("cannot serialize {}: {e}", path.display())))?;
    write_atomic(path, text.as_bytes())
}

// ------------------------------------------------------------ metric report

#[derive(Serialize, Deserialize)]
pub struct MetricReportFile {
    pub eval_head: String,
    pub mpjpe_mm: f64,
    pub nmpjpe_mm: f64,
    pub pmpjpe_mm: f64,
    pub pmpjpe_skipped_frames: usize,
    pub pck3d: f64,
    pub per_joint_mm: Vec<f64>,
    pub n_frames: usize,
}

impl MetricReportFile {
    pub fn from_core(r: &MetricReport) -> Self {
        Self {
            eval_head: r.eval_head.label().to_string(),
            mpjpe_mm: r.mpjpe,
            nmpjpe_mm: r.nmpjpe,
            pmpjpe_mm: r.pmpjpe,
            pmpjpe_skipped_frames: r.pmpjpe_skipped_frames,
            pck3d: r.pck3d,
            per_joint_mm: r.per_joint.clone(),
            n_frames: r.n_frames,
        }
    }
}
