//! Synthetic motion-capture generator: band-limited joint-angle
//! trajectories posed by forward kinematics, a circular multi-camera
//! rig, occlusion scripting from a virtual occluder sweep, and
//! detection corruption. The pipeline consumes 2D detections rather
//! than images, so a dataset is cameras + per-view detections +
//! ground-truth 3D.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from the trait in no_std builds
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::geometry::{project, Camera, CoordFrame, GeometryError, Pose2D, Pose3D};
use crate::linalg::{Mat3, Vec3};
use crate::rng::{derive_seed, seeded};
use crate::skeleton::Skeleton;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("no rest-pose rig is built in for a {0}-joint skeleton")]
    UnknownTopology(usize),
    #[error("sequence needs at least {expected} frames, got {got}")]
    TooShort { expected: usize, got: usize },
    #[error("occlusion rate {0} must lie in [0, 1]")]
    BadOcclusionRate(f64),
    #[error("labeled fraction {0} must lie in [0, 1]")]
    BadLabeledFraction(f64),
    #[error("rig needs at least one camera")]
    NoCameras,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionStyle {
    Walk,
    Reach,
    Mixed,
}

/// Caps on the sampled trajectories. Together with the rest-pose bone
/// lengths they bound end-effector speed below 4 m/s (80 mm between
/// frames at 50 fps): each of the three Euler angles of a joint moves
/// at most 2*pi*MAX_FREQ_HZ*MAX_ANGLE_AMPLITUDE ~ 0.45 rad/s, the
/// summed lever arms along the deepest chain stay under 3.6 m, and
/// root translation plus yaw add at most ~1.0 m/s.
pub const MAX_ANGLE_AMPLITUDE: f64 = 0.09;
pub const MAX_FREQ_HZ: f64 = 0.8;
pub const MAX_ROOT_AMPLITUDE_MM: f64 = 250.0;
pub const MAX_ROOT_FREQ_HZ: f64 = 0.22;
pub const SINUSOIDS_PER_ANGLE: usize = 4;

/// One joint-angle (or root) trajectory: a sum of at most four
/// sinusoids with capped total amplitude and band-limited frequency.
#[derive(Debug, Clone)]
struct Sinusoids {
    terms: Vec<(f64, f64, f64)>, // (amplitude, frequency hz, phase)
}

impl Sinusoids {
    fn sample(rng: &mut impl Rng, total_amplitude: f64, max_freq: f64) -> Self {
        let n = rng.random_range(1..=SINUSOIDS_PER_ANGLE);
        let mut raw: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| {
                (
                    rng.random_range(0.1..1.0),
                    rng.random_range(0.05..max_freq),
                    rng.random_range(0.0..core::f64::consts::TAU),
                )
            })
            .collect();
        let sum: f64 = raw.iter().map(|t| t.0).sum();
        for t in &mut raw {
            t.0 *= total_amplitude / sum;
        }
        Self { terms: raw }
    }

    fn at(&self, seconds: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, f, p)| a * (core::f64::consts::TAU * f * seconds + p).sin())
            .sum()
    }
}

/// Rest-pose bone offsets (mm, in the parent frame) for the built-in
/// skeletons, indexed like the skeleton joints.
fn rest_offsets(skel: &Skeleton) -> Result<Vec<Vec3>, SynthError> {
    let mm = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    let offsets: Vec<(&str, Vec3)> = match skel.n_joints() {
        17 => vec![
            ("pelvis", mm(0.0, 0.0, 0.0)),
            ("r_hip", mm(-120.0, 0.0, 0.0)),
            ("r_knee", mm(0.0, -440.0, 0.0)),
            ("r_ankle", mm(0.0, -430.0, 0.0)),
            ("l_hip", mm(120.0, 0.0, 0.0)),
            ("l_knee", mm(0.0, -440.0, 0.0)),
            ("l_ankle", mm(0.0, -430.0, 0.0)),
            ("spine", mm(0.0, 230.0, 0.0)),
            ("thorax", mm(0.0, 250.0, 0.0)),
            ("neck", mm(0.0, 110.0, 0.0)),
            ("head", mm(0.0, 110.0, 0.0)),
            ("l_shoulder", mm(150.0, 20.0, 0.0)),
            ("l_elbow", mm(280.0, 0.0, 0.0)),
            ("l_wrist", mm(250.0, 0.0, 0.0)),
            ("r_shoulder", mm(-150.0, 20.0, 0.0)),
            ("r_elbow", mm(-280.0, 0.0, 0.0)),
            ("r_wrist", mm(-250.0, 0.0, 0.0)),
        ],
        13 => vec![
            ("pelvis", mm(0.0, 0.0, 0.0)),
            ("r_hip", mm(-120.0, 0.0, 0.0)),
            ("r_knee", mm(0.0, -440.0, 0.0)),
            ("r_ankle", mm(0.0, -430.0, 0.0)),
            ("l_hip", mm(120.0, 0.0, 0.0)),
            ("l_knee", mm(0.0, -440.0, 0.0)),
            ("l_ankle", mm(0.0, -430.0, 0.0)),
            ("neck", mm(0.0, 560.0, 0.0)),
            ("head", mm(0.0, 190.0, 0.0)),
            ("l_shoulder", mm(170.0, -30.0, 0.0)),
            ("l_wrist", mm(480.0, 0.0, 0.0)),
            ("r_shoulder", mm(-170.0, -30.0, 0.0)),
            ("r_wrist", mm(-480.0, 0.0, 0.0)),
        ],
        other => return Err(SynthError::UnknownTopology(other)),
    };
    debug_assert!(offsets.iter().map(|(n, _)| *n).eq(skel.names().iter().map(|s| s.as_str())));
    Ok(offsets.into_iter().map(|(_, v)| v).collect())
}

/// Smooth articulated sequence with constant bone lengths.
#[derive(Debug, Clone)]
pub struct MotionSequence {
    pub frames: Vec<Pose3D>,
    pub fps: f64,
    pub subject: String,
    pub skeleton: Skeleton,
}

impl MotionSequence {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn bone_lengths(&self, frame: usize) -> Vec<f64> {
        self.skeleton
            .edges()
            .iter()
            .map(|&(a, b)| (self.frames[frame].joints[a] - self.frames[frame].joints[b]).norm())
            .collect()
    }
}

/// Generate a motion sequence by forward kinematics over band-limited
/// joint-angle trajectories. Per-style amplitude profiles move the legs
/// (walk), the arms (reach), or everything (mixed).
pub fn generate_motion(
    skel: &Skeleton,
    n_frames: usize,
    seed: u64,
    style: MotionStyle,
) -> Result<MotionSequence, SynthError> {
    if n_frames == 0 {
        return Err(SynthError::TooShort { expected: 1, got: 0 });
    }
    let offsets = rest_offsets(skel)?;
    let fps = 50.0;
    let mut rng = seeded(seed);

    let amplitude_for = |name: &str| -> f64 {
        let is_leg = name.contains("hip") || name.contains("knee") || name.contains("ankle");
        let is_arm = name.contains("shoulder") || name.contains("elbow") || name.contains("wrist");
        let profile = match style {
            MotionStyle::Walk => {
                if is_leg {
                    1.0
                } else if is_arm {
                    0.7
                } else {
                    0.35
                }
            }
            MotionStyle::Reach => {
                if is_arm {
                    1.0
                } else if is_leg {
                    0.25
                } else {
                    0.4
                }
            }
            MotionStyle::Mixed => 0.8,
        };
        MAX_ANGLE_AMPLITUDE * profile
    };

    // Three Euler angles per joint plus root translation and yaw.
    let joint_angles: Vec<[Sinusoids; 3]> = skel
        .names()
        .iter()
        .map(|name| {
            let amp = amplitude_for(name);
            [
                Sinusoids::sample(&mut rng, amp, MAX_FREQ_HZ),
                Sinusoids::sample(&mut rng, amp, MAX_FREQ_HZ),
                Sinusoids::sample(&mut rng, amp, MAX_FREQ_HZ),
            ]
        })
        .collect();
    let root_path = [
        Sinusoids::sample(&mut rng, MAX_ROOT_AMPLITUDE_MM, MAX_ROOT_FREQ_HZ),
        Sinusoids::sample(&mut rng, MAX_ROOT_AMPLITUDE_MM * 0.15, MAX_ROOT_FREQ_HZ),
        Sinusoids::sample(&mut rng, MAX_ROOT_AMPLITUDE_MM, MAX_ROOT_FREQ_HZ),
    ];
    let root_yaw = Sinusoids::sample(&mut rng, 0.35, 0.15);
    let root_height = 1000.0;

    // Children listed per parent for the kinematic pass.
    let mut children = vec![Vec::new(); skel.n_joints()];
    for &(parent, child) in skel.edges() {
        children[parent].push(child);
    }

    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let t = f as f64 / fps;
        let mut world = vec![Vec3::ZERO; skel.n_joints()];
        let mut rot = vec![Mat3::IDENTITY; skel.n_joints()];
        let root = skel.root_index();
        world[root] = Vec3::new(root_path[0].at(t), root_height + root_path[1].at(t), root_path[2].at(t));
        rot[root] = Mat3::rotation_axis_angle(Vec3::new(0.0, 1.0, 0.0), root_yaw.at(t));

        let mut stack = vec![root];
        while let Some(parent) = stack.pop() {
            for &child in &children[parent] {
                let [ax, ay, az] = &joint_angles[child];
                let local = Mat3::rotation_axis_angle(Vec3::new(1.0, 0.0, 0.0), ax.at(t))
                    * Mat3::rotation_axis_angle(Vec3::new(0.0, 1.0, 0.0), ay.at(t))
                    * Mat3::rotation_axis_angle(Vec3::new(0.0, 0.0, 1.0), az.at(t));
                rot[child] = rot[parent] * local;
                world[child] = world[parent] + rot[parent] * offsets[child];
                stack.push(child);
            }
        }
        frames.push(Pose3D::new(world, CoordFrame::World));
    }

    Ok(MotionSequence { frames, fps, subject: format!("subject-{seed}"), skeleton: skel.clone() })
}

/// Occlusion event: a set of skeleton-adjacent joints hidden from one
/// camera for a contiguous run of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionEvent {
    pub camera: usize,
    pub joints: Vec<usize>,
    pub start: usize,
    pub duration: usize,
}

/// Per-camera occlusion script derived from a virtual vertical slab
/// sweeping through each view.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OcclusionScript {
    pub events: Vec<OcclusionEvent>,
}

impl OcclusionScript {
    /// visibility[frame][joint] for one camera.
    pub fn occluded_table(&self, camera: usize, n_frames: usize, n_joints: usize) -> Vec<Vec<bool>> {
        let mut table = vec![vec![false; n_joints]; n_frames];
        for ev in self.events.iter().filter(|e| e.camera == camera) {
            for f in ev.start..(ev.start + ev.duration).min(n_frames) {
                for &j in &ev.joints {
                    table[f][j] = true;
                }
            }
        }
        table
    }

    /// Fraction of frames with at least one active event, per camera.
    pub fn frame_coverage(&self, camera: usize, n_frames: usize) -> f64 {
        let mut covered = vec![false; n_frames];
        for ev in self.events.iter().filter(|e| e.camera == camera) {
            for c in covered.iter_mut().skip(ev.start).take(ev.duration) {
                *c = true;
            }
        }
        covered.iter().filter(|&&c| c).count() as f64 / n_frames.max(1) as f64
    }
}

/// Width of the occluding slab in pixels and event duration bounds.
const SLAB_WIDTH_PX: core::ops::Range<f64> = 130.0..280.0;
const EVENT_FRAMES: core::ops::RangeInclusive<usize> = 5..=18;

/// Build an occlusion script whose per-camera frame coverage reaches
/// `rate`. Each event hides, for a stretch of frames, the joints that a
/// vertical slab over a seed joint would cover: spatial neighbours of
/// the seed (graph distance <= 2) whose projection falls inside the
/// slab at the event midpoint.
pub fn generate_occlusions(
    seq: &MotionSequence,
    cams: &[Camera],
    rate: f64,
    seed: u64,
) -> Result<OcclusionScript, SynthError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(SynthError::BadOcclusionRate(rate));
    }
    let mut rng = seeded(seed);
    let mut script = OcclusionScript::default();
    if rate == 0.0 {
        return Ok(script);
    }
    let n_frames = seq.n_frames();
    let n_joints = seq.skeleton.n_joints();
    for cam_idx in 0..cams.len() {
        // Generous attempt cap; coverage rises with every accepted event.
        for _ in 0..10_000 {
            if script.frame_coverage(cam_idx, n_frames) >= rate {
                break;
            }
            let duration = rng.random_range(EVENT_FRAMES).min(n_frames);
            let start = rng.random_range(0..=n_frames - duration);
            let mid = start + duration / 2;
            let seed_joint = rng.random_range(0..n_joints);
            let slab_w = rng.random_range(SLAB_WIDTH_PX);
            let Some(([seed_x, _], _)) = cams[cam_idx].project_point(seq.frames[mid].joints[seed_joint])
            else {
                continue;
            };
            let near = seq.skeleton.joints_within(seed_joint, 2);
            let joints: Vec<usize> = near
                .into_iter()
                .filter(|&j| {
                    cams[cam_idx]
                        .project_point(seq.frames[mid].joints[j])
                        .is_some_and(|([x, _], _)| (x - seed_x).abs() <= slab_w / 2.0)
                })
                .collect();
            if joints.is_empty() {
                continue;
            }
            script.events.push(OcclusionEvent { camera: cam_idx, joints, start, duration });
        }
    }
    Ok(script)
}

/// One camera's corrupted detections for a whole sequence.
#[derive(Debug, Clone)]
pub struct ViewDetections {
    pub camera_index: usize,
    pub frames: Vec<Pose2D>,
}

/// Detection noise is resampled beyond three standard deviations so
/// every visible detection reprojects within 3 sigma of the truth.
fn truncated_gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 3.0 {
            return z * sigma;
        }
    }
}

/// Corrupt ground-truth projections into detector-like 2D observations:
/// visible joints get truncated Gaussian noise, occluded joints are
/// flagged invisible and displaced by a uniform 50-150 px outlier, the
/// way a confused detector snaps to the occluder. Everything is clamped
/// to the image so normalized coordinates stay in [-1, 1].
pub fn corrupt_detections(
    seq: &MotionSequence,
    cams: &[Camera],
    image_dims: &[(f64, f64)],
    noise_sigma_px: f64,
    script: &OcclusionScript,
    seed: u64,
) -> Result<Vec<ViewDetections>, SynthError> {
    let n_joints = seq.skeleton.n_joints();
    let mut out = Vec::with_capacity(cams.len());
    for (cam_idx, cam) in cams.iter().enumerate() {
        let mut rng = seeded(derive_seed(seed, cam_idx as u64));
        let occluded = script.occluded_table(cam_idx, seq.n_frames(), n_joints);
        let (w, h) = image_dims[cam_idx];
        let mut frames = Vec::with_capacity(seq.n_frames());
        for (f, pose) in seq.frames.iter().enumerate() {
            let (proj, _) = project(cam, pose)?;
            let mut joints = Vec::with_capacity(n_joints);
            let mut visibility = Vec::with_capacity(n_joints);
            for (j, &[x, y]) in proj.joints.iter().enumerate() {
                let in_image = (0.0..=w).contains(&x) && (0.0..=h).contains(&y);
                let visible = in_image && !occluded[f][j];
                let [dx, dy] = if visible {
                    [truncated_gaussian(&mut rng, noise_sigma_px), truncated_gaussian(&mut rng, noise_sigma_px)]
                } else {
                    let radius = rng.random_range(50.0..150.0);
                    let angle = rng.random_range(0.0..core::f64::consts::TAU);
                    [radius * angle.cos(), radius * angle.sin()]
                };
                joints.push([(x + dx).clamp(0.0, w), (y + dy).clamp(0.0, h)]);
                visibility.push(visible);
            }
            frames.push(Pose2D::new(joints, visibility));
        }
        out.push(ViewDetections { camera_index: cam_idx, frames });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Test,
}

/// One generated sequence with its per-view detections.
#[derive(Debug, Clone)]
pub struct SequenceData {
    pub id: String,
    pub subset: Subset,
    pub fps: f64,
    pub frames_world: Vec<Pose3D>,
    /// Per-frame ground-truth-label availability; the labeled/unlabeled
    /// split of the training protocol.
    pub labeled: Vec<bool>,
    pub views: Vec<ViewDetections>,
    pub script: OcclusionScript,
}

/// A camera plus its image dimensions in pixels.
#[derive(Debug, Clone)]
pub struct RigCamera {
    pub camera: Camera,
    pub width: f64,
    pub height: f64,
}

/// Fully materialized synthetic dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub skeleton: Skeleton,
    pub cameras: Vec<RigCamera>,
    pub sequences: Vec<SequenceData>,
}

/// Generation settings; defaults echo a four-camera capture studio.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_train_sequences: usize,
    pub n_test_sequences: usize,
    pub n_frames: usize,
    pub n_cameras: usize,
    pub noise_px: f64,
    pub occlusion_rate: f64,
    pub labeled_fraction: f64,
    pub n_joints: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train_sequences: 8,
            n_test_sequences: 2,
            n_frames: 600,
            n_cameras: 4,
            noise_px: 5.0,
            occlusion_rate: 0.3,
            labeled_fraction: 1.0,
            n_joints: 17,
            seed: 0,
        }
    }
}

/// Default rig: cameras on a 3 m circle at 1.5 m height looking at the
/// subject area, focal 1000 px, 1000x1000 images.
pub fn default_rig(n_cameras: usize) -> Result<Vec<RigCamera>, SynthError> {
    if n_cameras == 0 {
        return Err(SynthError::NoCameras);
    }
    (0..n_cameras)
        .map(|i| {
            let angle = core::f64::consts::TAU * i as f64 / n_cameras as f64;
            let pos = Vec3::new(3000.0 * angle.cos(), 1500.0, 3000.0 * angle.sin());
            let cam = Camera::look_at(
                format!("cam{i}"),
                pos,
                Vec3::new(0.0, 1000.0, 0.0),
                1000.0,
                [500.0, 500.0],
            )?;
            Ok(RigCamera { camera: cam, width: 1000.0, height: 1000.0 })
        })
        .collect()
}

/// Generate a complete dataset. Per-sequence child seeds keep
/// generation order-independent; frame f is labeled when
/// floor(f * fraction) advances, which spreads labels uniformly
/// (fraction 0.1 labels every 10th frame).
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Dataset, SynthError> {
    if !(0.0..=1.0).contains(&cfg.labeled_fraction) {
        return Err(SynthError::BadLabeledFraction(cfg.labeled_fraction));
    }
    let skeleton = match cfg.n_joints {
        13 => Skeleton::sport_13(),
        _ => Skeleton::h36m_17(),
    };
    let rig = default_rig(cfg.n_cameras)?;
    let cams: Vec<Camera> = rig.iter().map(|r| r.camera.clone()).collect();
    let dims: Vec<(f64, f64)> = rig.iter().map(|r| (r.width, r.height)).collect();

    let styles = [MotionStyle::Walk, MotionStyle::Reach, MotionStyle::Mixed];
    let total = cfg.n_train_sequences + cfg.n_test_sequences;
    let mut sequences = Vec::with_capacity(total);
    for i in 0..total {
        let child = derive_seed(cfg.seed, i as u64);
        let style = styles[i % styles.len()];
        let seq = generate_motion(&skeleton, cfg.n_frames, child, style)?;
        let script = generate_occlusions(&seq, &cams, cfg.occlusion_rate, derive_seed(child, 1))?;
        let views = corrupt_detections(&seq, &cams, &dims, cfg.noise_px, &script, derive_seed(child, 2))?;
        let labeled = labeled_flags(cfg.n_frames, cfg.labeled_fraction);
        let subset = if i < cfg.n_train_sequences { Subset::Train } else { Subset::Test };
        sequences.push(SequenceData {
            id: format!("seq{i:03}"),
            subset,
            fps: seq.fps,
            frames_world: seq.frames,
            labeled,
            views,
            script,
        });
    }
    Ok(Dataset { skeleton, cameras: rig, sequences })
}

/// Evenly spread labeled frames at the requested fraction.
pub fn labeled_flags(n_frames: usize, fraction: f64) -> Vec<bool> {
    (0..n_frames)
        .map(|f| {
            let before = (f as f64 * fraction).floor();
            let after = ((f + 1) as f64 * fraction).floor();
            after > before
        })
        .collect()
}

/// Visibility counters used by the dataset stats report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityStats {
    pub total_observations: u64,
    pub visible: u64,
    pub occluded: u64,
}

pub fn visibility_stats(ds: &Dataset) -> VisibilityStats {
    let mut stats = VisibilityStats { total_observations: 0, visible: 0, occluded: 0 };
    for seq in &ds.sequences {
        for view in &seq.views {
            for frame in &view.frames {
                for &v in &frame.visibility {
                    stats.total_observations += 1;
                    if v {
                        stats.visible += 1;
                    } else {
                        stats.occluded += 1;
                    }
                }
            }
        }
    }
    stats
}
