//! Camera model and the 2.5D depth decomposition: a camera-frame joint
//! satisfies (d_root + d_rel_j) (x_j, y_j, 1)^T = K (X_j^C, Y_j^C,
//! d_root + d_rel_j)^T, so a pose is recoverable from its 2D projection
//! plus the root depth and per-joint relative depths. Also carries the
//! per-joint DLT triangulation used to build pseudo-labels.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from the trait in no_std builds
use num_traits::Float;
use thiserror::Error;

use crate::linalg::{solve3_pseudo, Mat3, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation matrix is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("intrinsic matrix must be upper-triangular with positive focal entries")]
    InvalidIntrinsics,
    #[error("joint {joint} is behind the camera (depth {depth})")]
    JointBehindCamera { joint: usize, depth: f64 },
    #[error("intrinsic matrix is singular")]
    SingularIntrinsics,
    #[error("depth decomposition violates d_root + d_rel > 0 at joint {0}")]
    NonPositiveDepth(usize),
    #[error("pose has {got} joints, expected {expected}")]
    JointCount { expected: usize, got: usize },
    #[error("joint {joint} is visible in {views} view(s); triangulation needs at least 2")]
    InsufficientViews { joint: usize, views: usize },
    #[error("image dimensions must be positive")]
    BadImageDims,
    #[error("observation count {got} does not match camera count {expected}")]
    ViewCount { expected: usize, got: usize },
}

/// Whether 3D coordinates are expressed in the world or a camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordFrame {
    World,
    Camera,
}

/// Per-frame 3D joint set in millimetres. Root joint is index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    pub joints: Vec<Vec3>,
    pub frame: CoordFrame,
}

impl Pose3D {
    pub fn new(joints: Vec<Vec3>, frame: CoordFrame) -> Self {
        Self { joints, frame }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }
}

/// Per-frame 2D joint set with visibility flags. Coordinates are either
/// undistorted pixels or the [-1, 1]-normalized form; the two are
/// related by [`normalize2d`] / [`denormalize2d`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pose2D {
    pub joints: Vec<[f64; 2]>,
    pub visibility: Vec<bool>,
}

impl Pose2D {
    pub fn new(joints: Vec<[f64; 2]>, visibility: Vec<bool>) -> Self {
        debug_assert_eq!(joints.len(), visibility.len());
        Self { joints, visibility }
    }

    pub fn all_visible(joints: Vec<[f64; 2]>) -> Self {
        let n = joints.len();
        Self { joints, visibility: vec![true; n] }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }
}

/// Root depth plus per-joint offsets; the root entry of `d_rel` is
/// exactly zero and every d_root + d_rel_j stays positive (in front of
/// the camera).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthDecomposition {
    pub d_root: f64,
    pub d_rel: Vec<f64>,
}

impl DepthDecomposition {
    pub fn new(d_root: f64, d_rel: Vec<f64>) -> Result<Self, GeometryError> {
        for (j, &rel) in d_rel.iter().enumerate() {
            if d_root + rel <= 0.0 {
                return Err(GeometryError::NonPositiveDepth(j));
            }
        }
        Ok(Self { d_root, d_rel })
    }

    pub fn depth_of(&self, joint: usize) -> f64 {
        self.d_root + self.d_rel[joint]
    }
}

/// Calibrated pinhole camera: intrinsics K (pixels), rotation R and
/// translation t (millimetres) mapping world to camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub id: String,
    k: Mat3,
    r: Mat3,
    t: Vec3,
}

impl Camera {
    pub fn new(id: String, k: Mat3, r: Mat3, t: Vec3) -> Result<Self, GeometryError> {
        if !r.is_rotation(1e-9) {
            return Err(GeometryError::InvalidRotation);
        }
        let lower_zero = k.0[1][0] == 0.0 && k.0[2][0] == 0.0 && k.0[2][1] == 0.0;
        if !lower_zero || k.0[0][0] <= 0.0 || k.0[1][1] <= 0.0 || k.0[2][2] <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics);
        }
        Ok(Self { id, k, r, t })
    }

    /// Camera at `position` looking at `target` (world mm), horizon kept
    /// level. Convenience constructor for synthetic rigs.
    pub fn look_at(
        id: String,
        position: Vec3,
        target: Vec3,
        focal_px: f64,
        principal: [f64; 2],
    ) -> Result<Self, GeometryError> {
        let forward = (target - position).normalized().ok_or(GeometryError::InvalidRotation)?;
        let world_up = Vec3::new(0.0, 1.0, 0.0);
        let right = forward.cross(&world_up).normalized().ok_or(GeometryError::InvalidRotation)?;
        let down = forward.cross(&right);
        // Rows of R are the camera axes: x right, y down, z forward.
        let r = Mat3::from_rows(right, down, forward);
        let t = -(r * position);
        let k = Mat3([[focal_px, 0.0, principal[0]], [0.0, focal_px, principal[1]], [0.0, 0.0, 1.0]]);
        Camera::new(id, k, r, t)
    }

    pub fn intrinsics(&self) -> &Mat3 {
        &self.k
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.r
    }

    pub fn translation(&self) -> Vec3 {
        self.t
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.r * p + self.t
    }

    pub fn camera_to_world(&self, p: Vec3) -> Vec3 {
        self.r.transpose() * (p - self.t)
    }

    /// Pixel projection and depth of a single world point.
    pub fn project_point(&self, world: Vec3) -> Option<([f64; 2], f64)> {
        let cam = self.world_to_camera(world);
        let depth = cam.z();
        if depth <= 0.0 {
            return None;
        }
        let h = self.k * cam;
        Some(([h.x() / depth, h.y() / depth], depth))
    }

    /// Rows of the 3x4 projection matrix P = K [R | t].
    pub fn projection_rows(&self) -> [[f64; 4]; 3] {
        let kr = self.k * self.r;
        let kt = self.k * self.t;
        let mut rows = [[0.0; 4]; 3];
        for i in 0..3 {
            rows[i][..3].copy_from_slice(&kr.0[i]);
            rows[i][3] = kt.0[i];
        }
        rows
    }
}

/// Project a world pose, returning pixel coordinates (all visible) and
/// the exact (d_root, d_rel) decomposition with the root at index 0.
pub fn project(cam: &Camera, pose: &Pose3D) -> Result<(Pose2D, DepthDecomposition), GeometryError> {
    debug_assert_eq!(pose.frame, CoordFrame::World);
    let mut joints = Vec::with_capacity(pose.len());
    let mut depths = Vec::with_capacity(pose.len());
    for (j, &p) in pose.joints.iter().enumerate() {
        let cam_p = cam.world_to_camera(p);
        if cam_p.z() <= 0.0 {
            return Err(GeometryError::JointBehindCamera { joint: j, depth: cam_p.z() });
        }
        let h = cam.k * cam_p;
        joints.push([h.x() / cam_p.z(), h.y() / cam_p.z()]);
        depths.push(cam_p.z());
    }
    let d_root = depths[0];
    let d_rel = depths.iter().map(|d| d - d_root).collect();
    Ok((Pose2D::all_visible(joints), DepthDecomposition { d_root, d_rel }))
}

/// Invert the projection: camera-frame joint j is
/// (d_root + d_rel_j) K^{-1} (x_j, y_j, 1)^T, world = R^T (cam - t).
/// Input coordinates are undistorted pixels.
pub fn backproject(
    cam: &Camera,
    p2d: &Pose2D,
    depth: &DepthDecomposition,
) -> Result<(Pose3D, Pose3D), GeometryError> {
    if p2d.len() != depth.d_rel.len() {
        return Err(GeometryError::JointCount { expected: depth.d_rel.len(), got: p2d.len() });
    }
    let k_inv = cam.k.inverse().ok_or(GeometryError::SingularIntrinsics)?;
    let mut cam_joints = Vec::with_capacity(p2d.len());
    let mut world_joints = Vec::with_capacity(p2d.len());
    for (j, &[x, y]) in p2d.joints.iter().enumerate() {
        let z = depth.d_root + depth.d_rel[j];
        if z <= 0.0 {
            return Err(GeometryError::NonPositiveDepth(j));
        }
        let ray = k_inv * Vec3::new(x, y, 1.0);
        let cam_p = ray.scaled(z);
        cam_joints.push(cam_p);
        world_joints.push(cam.camera_to_world(cam_p));
    }
    Ok((Pose3D::new(cam_joints, CoordFrame::Camera), Pose3D::new(world_joints, CoordFrame::World)))
}

/// Map pixel coordinates to [-1, 1]: x' = 2x/w - 1, y' = 2y/h - 1.
pub fn normalize2d(p2d: &Pose2D, image_w: f64, image_h: f64) -> Result<Pose2D, GeometryError> {
    if image_w <= 0.0 || image_h <= 0.0 {
        return Err(GeometryError::BadImageDims);
    }
    let joints = p2d
        .joints
        .iter()
        .map(|&[x, y]| [2.0 * x / image_w - 1.0, 2.0 * y / image_h - 1.0])
        .collect();
    Ok(Pose2D { joints, visibility: p2d.visibility.clone() })
}

/// Inverse of [`normalize2d`].
pub fn denormalize2d(p2d: &Pose2D, image_w: f64, image_h: f64) -> Result<Pose2D, GeometryError> {
    if image_w <= 0.0 || image_h <= 0.0 {
        return Err(GeometryError::BadImageDims);
    }
    let joints = p2d
        .joints
        .iter()
        .map(|&[x, y]| [(x + 1.0) * 0.5 * image_w, (y + 1.0) * 0.5 * image_h])
        .collect();
    Ok(Pose2D { joints, visibility: p2d.visibility.clone() })
}

/// Triangulated pose with per-joint RMS reprojection residuals (px).
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub pose: Pose3D,
    pub residual_px: Vec<f64>,
}

/// Per-joint linear least-squares (DLT) triangulation from pixel
/// observations in two or more views, gated by visibility. Errors if
/// any joint is visible in fewer than two views; use
/// [`triangulate_joint`] for per-joint gating.
pub fn triangulate_dlt(cams: &[Camera], obs: &[Pose2D]) -> Result<Triangulation, GeometryError> {
    if obs.len() != cams.len() {
        return Err(GeometryError::ViewCount { expected: cams.len(), got: obs.len() });
    }
    let n_joints = obs.first().map(|o| o.len()).unwrap_or(0);
    let mut joints = Vec::with_capacity(n_joints);
    let mut residuals = Vec::with_capacity(n_joints);
    for j in 0..n_joints {
        let views: Vec<(usize, [f64; 2])> = obs
            .iter()
            .enumerate()
            .filter(|(_, o)| o.visibility[j])
            .map(|(c, o)| (c, o.joints[j]))
            .collect();
        let (point, residual) = triangulate_joint(cams, &views, j)?;
        joints.push(point);
        residuals.push(residual);
    }
    Ok(Triangulation { pose: Pose3D::new(joints, CoordFrame::World), residual_px: residuals })
}

/// DLT for one joint from (camera index, pixel) observations. Solves
/// the stacked rays u (P3 . X) = P1 . X, v (P3 . X) = P2 . X in the
/// inhomogeneous form via 3x3 normal equations; returns the point and
/// the RMS reprojection residual over the used views.
pub fn triangulate_joint(
    cams: &[Camera],
    views: &[(usize, [f64; 2])],
    joint: usize,
) -> Result<(Vec3, f64), GeometryError> {
    if views.len() < 2 {
        return Err(GeometryError::InsufficientViews { joint, views: views.len() });
    }
    let mut ata = Mat3([[0.0; 3]; 3]);
    let mut atb = Vec3::ZERO;
    for &(cam_idx, [u, v]) in views {
        let p = cams[cam_idx].projection_rows();
        for (coord, row) in [(u, 0usize), (v, 1usize)] {
            let a = [
                coord * p[2][0] - p[row][0],
                coord * p[2][1] - p[row][1],
                coord * p[2][2] - p[row][2],
            ];
            let b = p[row][3] - coord * p[2][3];
            for r in 0..3 {
                for c in 0..3 {
                    ata.0[r][c] += a[r] * a[c];
                }
                atb.0[r] += a[r] * b;
            }
        }
    }
    let point = solve3_pseudo(&ata, atb);
    let mut sq_sum = 0.0;
    for &(cam_idx, [u, v]) in views {
        match cams[cam_idx].project_point(point) {
            Some(([pu, pv], _)) => sq_sum += (pu - u).powi(2) + (pv - v).powi(2),
            None => sq_sum += f64::INFINITY,
        }
    }
    Ok((point, (sq_sum / views.len() as f64).sqrt()))
}
