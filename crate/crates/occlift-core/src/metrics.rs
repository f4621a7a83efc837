//! MPJPE-family pose error metrics. All of them root-center both poses
//! first (the evaluation protocol supplies the ground-truth root
//! depth); NMPJPE adds a per-frame optimal scale and PMPJPE a full
//! per-frame similarity (Umeyama) alignment. The root joint is excluded
//! from the averaged distances: after centering it is identically zero.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from the trait in no_std builds
use num_traits::Float;
use thiserror::Error;

use crate::geometry::Pose3D;
use crate::linalg::{svd3, Mat3, Vec3};

pub const PCK3D_THRESHOLD_MM: f64 = 150.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no frames to evaluate")]
    EmptyInput,
    #[error("frame {frame}: pose has {got} joints, expected {expected}")]
    JointCount { frame: usize, expected: usize, got: usize },
    #[error("frame {0}: root joint is flagged invalid")]
    InvalidRoot(usize),
    #[error("frame {0}: prediction has zero norm, optimal scale is undefined")]
    ZeroNormPrediction(usize),
    #[error("no valid non-root joints across all frames")]
    NoValidJoints,
}

/// One evaluation frame: prediction and ground truth in the same rigid
/// frame, plus per-joint validity flags.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub pred: Pose3D,
    pub gt: Pose3D,
    pub valid: Vec<bool>,
}

impl EvalPair {
    pub fn all_valid(pred: Pose3D, gt: Pose3D) -> Self {
        let n = pred.len();
        Self { pred, gt, valid: vec![true; n] }
    }
}

fn check(pairs: &[EvalPair]) -> Result<usize, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let n = pairs[0].pred.len();
    for (f, p) in pairs.iter().enumerate() {
        if p.pred.len() != n || p.gt.len() != n || p.valid.len() != n {
            return Err(MetricError::JointCount { frame: f, expected: n, got: p.pred.len().min(p.gt.len()) });
        }
        if !p.valid[0] {
            return Err(MetricError::InvalidRoot(f));
        }
    }
    Ok(n)
}

fn centered(pose: &Pose3D) -> Vec<Vec3> {
    let root = pose.joints[0];
    pose.joints.iter().map(|&p| p - root).collect()
}

/// Mean Euclidean distance over valid non-root joints and frames after
/// root-centering both poses.
pub fn mpjpe(pairs: &[EvalPair]) -> Result<f64, MetricError> {
    check(pairs)?;
    let mut total = 0.0;
    let mut count = 0u64;
    for p in pairs {
        let pred = centered(&p.pred);
        let gt = centered(&p.gt);
        for j in 1..pred.len() {
            if p.valid[j] {
                total += (pred[j] - gt[j]).norm();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricError::NoValidJoints);
    }
    Ok(total / count as f64)
}

/// MPJPE after applying, per frame, the least-squares optimal scale
/// s* = <pred, gt> / <pred, pred> to the root-centered prediction.
pub fn nmpjpe(pairs: &[EvalPair]) -> Result<f64, MetricError> {
    check(pairs)?;
    let mut total = 0.0;
    let mut count = 0u64;
    for (f, p) in pairs.iter().enumerate() {
        let pred = centered(&p.pred);
        let gt = centered(&p.gt);
        let mut dot_pg = 0.0;
        let mut dot_pp = 0.0;
        for j in 1..pred.len() {
            if p.valid[j] {
                dot_pg += pred[j].dot(&gt[j]);
                dot_pp += pred[j].dot(&pred[j]);
            }
        }
        if dot_pp == 0.0 {
            return Err(MetricError::ZeroNormPrediction(f));
        }
        let scale = dot_pg / dot_pp;
        for j in 1..pred.len() {
            if p.valid[j] {
                total += (pred[j].scaled(scale) - gt[j]).norm();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricError::NoValidJoints);
    }
    Ok(total / count as f64)
}

/// Similarity transform aligning `from` onto `to` in the least-squares
/// sense (Umeyama): rotation, scale, translation.
pub struct SimilarityFit {
    pub rotation: Mat3,
    pub scale: f64,
    pub translation: Vec3,
}

/// Umeyama alignment over the given points. None when the point set is
/// degenerate (fewer than 3 points, collinear, or coincident).
pub fn umeyama(from: &[Vec3], to: &[Vec3]) -> Option<SimilarityFit> {
    let n = from.len();
    if n < 3 || n != to.len() {
        return None;
    }
    let inv_n = 1.0 / n as f64;
    let mut mu_from = Vec3::ZERO;
    let mut mu_to = Vec3::ZERO;
    for (f, t) in from.iter().zip(to) {
        mu_from = mu_from + *f;
        mu_to = mu_to + *t;
    }
    mu_from = mu_from.scaled(inv_n);
    mu_to = mu_to.scaled(inv_n);

    let mut cov = Mat3([[0.0; 3]; 3]); // cross-covariance of (to, from)
    let mut var_from = 0.0;
    for (f, t) in from.iter().zip(to) {
        let df = *f - mu_from;
        let dt = *t - mu_to;
        for r in 0..3 {
            for c in 0..3 {
                cov.0[r][c] += dt.0[r] * df.0[c] * inv_n;
            }
        }
        var_from += df.dot(&df) * inv_n;
    }
    if var_from == 0.0 {
        return None;
    }
    let svd = svd3(&cov);
    // Collinear point sets leave the rotation underdetermined.
    if svd.sigma[1] <= svd.sigma[0] * 1e-9 {
        return None;
    }
    // Reflection guard: flip the weakest direction so det(R) = +1.
    let flip = (svd.u.det() * svd.vt.det()) < 0.0;
    let d = if flip { -1.0 } else { 1.0 };
    let mut u = svd.u;
    for row in 0..3 {
        u.0[row][2] *= d;
    }
    let rotation = u * svd.vt;
    let trace_ds = svd.sigma[0] + svd.sigma[1] + d * svd.sigma[2];
    let scale = trace_ds / var_from;
    let translation = mu_to - (rotation * mu_from).scaled(scale);
    Some(SimilarityFit { rotation, scale, translation })
}

/// MPJPE after per-frame similarity (Procrustes) alignment of the
/// prediction onto the ground truth over the valid joints. Degenerate
/// frames are skipped and counted.
pub fn pmpjpe(pairs: &[EvalPair]) -> Result<(f64, usize), MetricError> {
    check(pairs)?;
    let mut total = 0.0;
    let mut count = 0u64;
    let mut skipped = 0usize;
    for p in pairs {
        let pred: Vec<Vec3> = (0..p.pred.len()).filter(|&j| p.valid[j]).map(|j| p.pred.joints[j]).collect();
        let gt: Vec<Vec3> = (0..p.gt.len()).filter(|&j| p.valid[j]).map(|j| p.gt.joints[j]).collect();
        let Some(fit) = umeyama(&pred, &gt) else {
            skipped += 1;
            continue;
        };
        for j in 1..p.pred.len() {
            if p.valid[j] {
                let aligned = (fit.rotation * p.pred.joints[j]).scaled(fit.scale) + fit.translation;
                total += (aligned - p.gt.joints[j]).norm();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricError::NoValidJoints);
    }
    Ok((total / count as f64, skipped))
}

/// Fraction of valid non-root joints whose root-centered error is below
/// the threshold.
pub fn pck3d(pairs: &[EvalPair], threshold_mm: f64) -> Result<f64, MetricError> {
    check(pairs)?;
    let mut hits = 0u64;
    let mut count = 0u64;
    for p in pairs {
        let pred = centered(&p.pred);
        let gt = centered(&p.gt);
        for j in 1..pred.len() {
            if p.valid[j] {
                count += 1;
                if (pred[j] - gt[j]).norm() < threshold_mm {
                    hits += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(MetricError::NoValidJoints);
    }
    Ok(hits as f64 / count as f64)
}

/// Per-joint root-centered mean error; the root entry is 0 by
/// construction and joints never valid are reported as NaN-free zeros.
pub fn per_joint_mpjpe(pairs: &[EvalPair]) -> Result<Vec<f64>, MetricError> {
    let n = check(pairs)?;
    let mut total = vec![0.0f64; n];
    let mut count = vec![0u64; n];
    for p in pairs {
        let pred = centered(&p.pred);
        let gt = centered(&p.gt);
        for j in 0..n {
            if p.valid[j] {
                total[j] += (pred[j] - gt[j]).norm();
                count[j] += 1;
            }
        }
    }
    Ok(total.iter().zip(&count).map(|(t, &c)| if c > 0 { t / c as f64 } else { 0.0 }).collect())
}

/// Which network head produced the evaluated poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalHead {
    Lnet,
    Rnet,
}

impl EvalHead {
    pub fn label(&self) -> &'static str {
        match self {
            EvalHead::Lnet => "lnet",
            EvalHead::Rnet => "rnet",
        }
    }
}

/// Bundle of every metric over one evaluation run.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub eval_head: EvalHead,
    pub mpjpe: f64,
    pub nmpjpe: f64,
    pub pmpjpe: f64,
    pub pmpjpe_skipped_frames: usize,
    pub pck3d: f64,
    pub per_joint: Vec<f64>,
    pub n_frames: usize,
}

impl MetricReport {
    pub fn from_pairs(pairs: &[EvalPair], head: EvalHead) -> Result<Self, MetricError> {
        let (pm, skipped) = pmpjpe(pairs)?;
        Ok(Self {
            eval_head: head,
            mpjpe: mpjpe(pairs)?,
            nmpjpe: nmpjpe(pairs)?,
            pmpjpe: pm,
            pmpjpe_skipped_frames: skipped,
            pck3d: pck3d(pairs, PCK3D_THRESHOLD_MM)?,
            per_joint: per_joint_mpjpe(pairs)?,
            n_frames: pairs.len(),
        })
    }
}

/// Human-readable one-liner used by reports and logs.
pub fn summary_line(r: &MetricReport) -> String {
    alloc::format!(
        "head={} mpjpe={:.2}mm nmpjpe={:.2}mm pmpjpe={:.2}mm pck3d={:.3} frames={}",
        r.eval_head.label(),
        r.mpjpe,
        r.nmpjpe,
        r.pmpjpe,
        r.pck3d,
        r.n_frames
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CoordFrame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Pose3D {
        Pose3D::new(
            (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                    )
                })
                .collect(),
            CoordFrame::Camera,
        )
    }

    fn perturbed(rng: &mut ChaCha8Rng, pose: &Pose3D, sigma: f64) -> Pose3D {
        Pose3D::new(
            pose.joints
                .iter()
                .map(|&p| {
                    p + Vec3::new(
                        rng.random_range(-sigma..sigma),
                        rng.random_range(-sigma..sigma),
                        rng.random_range(-sigma..sigma),
                    )
                })
                .collect(),
            pose.frame,
        )
    }

    /// Independent single-loop oracles.
    fn naive_mpjpe(pairs: &[EvalPair]) -> f64 {
        let mut total = 0.0;
        let mut n = 0.0;
        for p in pairs {
            for j in 1..p.pred.len() {
                if !p.valid[j] {
                    continue;
                }
                let pr = p.pred.joints[j] - p.pred.joints[0];
                let gt = p.gt.joints[j] - p.gt.joints[0];
                let d = ((pr.x() - gt.x()).powi(2) + (pr.y() - gt.y()).powi(2) + (pr.z() - gt.z()).powi(2)).sqrt();
                total += d;
                n += 1.0;
            }
        }
        total / n
    }

    #[test]
    fn mpjpe_of_identical_poses_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pose = random_pose(&mut rng, 17, 500.0);
        let pairs = vec![EvalPair::all_valid(pose.clone(), pose)];
        assert_eq!(mpjpe(&pairs).unwrap(), 0.0);
        assert_eq!(nmpjpe(&pairs).unwrap(), 0.0);
        assert_eq!(pck3d(&pairs, PCK3D_THRESHOLD_MM).unwrap(), 1.0);
    }

    #[test]
    fn mpjpe_of_three_four_offset_is_five() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = random_pose(&mut rng, 17, 500.0);
        let offset = Vec3::new(3.0, 4.0, 0.0);
        let pred = Pose3D::new(
            gt.joints.iter().enumerate().map(|(j, &p)| if j == 0 { p } else { p + offset }).collect(),
            gt.frame,
        );
        let pairs = vec![EvalPair::all_valid(pred, gt)];
        assert!((mpjpe(&pairs).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mpjpe_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let gt = random_pose(&mut rng, 17, 400.0);
            let pred = perturbed(&mut rng, &gt, 60.0);
            let mut valid = vec![true; 17];
            valid[5] = false;
            let pairs = vec![EvalPair { pred, gt, valid }];
            let got = mpjpe(&pairs).unwrap();
            let want = naive_mpjpe(&pairs);
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn nmpjpe_removes_global_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = random_pose(&mut rng, 17, 400.0);
        let pred = Pose3D::new(gt.joints.iter().map(|&p| p.scaled(2.0)).collect(), gt.frame);
        let pairs = vec![EvalPair::all_valid(pred, gt)];
        assert!(nmpjpe(&pairs).unwrap() < 1e-9);
    }

    #[test]
    fn optimal_scale_cannot_hurt_in_least_squares() {
        // The theorem is on the squared objective: the fitted scale
        // never increases the sum of squared residuals over s = 1.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let gt = random_pose(&mut rng, 17, 300.0);
            let pred = perturbed(&mut rng, &gt, 80.0);
            let pc = centered(&pred);
            let gc = centered(&gt);
            let mut dot_pg = 0.0;
            let mut dot_pp = 0.0;
            for j in 1..17 {
                dot_pg += pc[j].dot(&gc[j]);
                dot_pp += pc[j].dot(&pc[j]);
            }
            let s = dot_pg / dot_pp;
            let sq = |scale: f64| -> f64 {
                (1..17).map(|j| (pc[j].scaled(scale) - gc[j]).dot(&(pc[j].scaled(scale) - gc[j]))).sum()
            };
            assert!(sq(s) <= sq(1.0) + 1e-9);
        }
    }

    #[test]
    fn nmpjpe_does_not_exceed_mpjpe_on_independent_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let gt = random_pose(&mut rng, 17, 300.0);
            let pred = random_pose(&mut rng, 17, 300.0);
            let pairs = vec![EvalPair::all_valid(pred, gt)];
            assert!(nmpjpe(&pairs).unwrap() <= mpjpe(&pairs).unwrap() + 1e-9);
        }
    }

    #[test]
    fn pmpjpe_removes_a_full_similarity_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let gt = random_pose(&mut rng, 17, 400.0);
            let axis = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let r = Mat3::rotation_axis_angle(axis, rng.random_range(-3.0..3.0));
            let s = rng.random_range(0.5..2.0);
            let t = Vec3::new(
                rng.random_range(-500.0..500.0),
                rng.random_range(-500.0..500.0),
                rng.random_range(-500.0..500.0),
            );
            let pred = Pose3D::new(gt.joints.iter().map(|&p| (r * p).scaled(s) + t).collect(), gt.frame);
            let pairs = vec![EvalPair::all_valid(pred, gt)];
            let (err, skipped) = pmpjpe(&pairs).unwrap();
            assert_eq!(skipped, 0);
            assert!(err < 1e-6, "similarity not removed: {err}");
        }
    }

    #[test]
    fn procrustes_enforces_a_proper_rotation_on_reflected_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gt = random_pose(&mut rng, 17, 400.0);
        // Reflect through the x=0 plane.
        let pred = Pose3D::new(
            gt.joints.iter().map(|&p| Vec3::new(-p.x(), p.y(), p.z())).collect(),
            gt.frame,
        );
        let fit = umeyama(&pred.joints, &gt.joints).unwrap();
        assert!((fit.rotation.det() - 1.0).abs() < 1e-9, "det {}", fit.rotation.det());
        let pairs = vec![EvalPair::all_valid(pred, gt)];
        let (err, _) = pmpjpe(&pairs).unwrap();
        assert!(err > 1.0, "a reflection must not be fully recoverable: {err}");
    }

    #[test]
    fn alignment_classes_nest_on_independent_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let gt = random_pose(&mut rng, 17, 350.0);
            let pred = random_pose(&mut rng, 17, 350.0);
            let pairs = vec![EvalPair::all_valid(pred, gt)];
            let m = mpjpe(&pairs).unwrap();
            let n = nmpjpe(&pairs).unwrap();
            let (p, _) = pmpjpe(&pairs).unwrap();
            assert!(p <= n + 1e-9, "pmpjpe {p} > nmpjpe {n}");
            assert!(n <= m + 1e-9, "nmpjpe {n} > mpjpe {m}");
        }
    }

    #[test]
    fn procrustes_never_exceeds_scale_only_alignment_on_correlated_pairs() {
        // The similarity class strictly contains root-centering plus
        // scale, and empirically the full alignment keeps the mean norm
        // below the scale-only one on prediction-like pairs too.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let gt = random_pose(&mut rng, 17, 350.0);
            let pred = perturbed(&mut rng, &gt, 90.0);
            let pairs = vec![EvalPair::all_valid(pred, gt)];
            let n = nmpjpe(&pairs).unwrap();
            let (p, _) = pmpjpe(&pairs).unwrap();
            assert!(p <= n + 1e-9, "pmpjpe {p} > nmpjpe {n}");
        }
    }

    #[test]
    fn metrics_are_invariant_to_global_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gt = random_pose(&mut rng, 17, 400.0);
        let pred = perturbed(&mut rng, &gt, 50.0);
        let shift = Vec3::new(1234.0, -777.0, 99.0);
        let shifted = |pose: &Pose3D| {
            Pose3D::new(pose.joints.iter().map(|&p| p + shift).collect(), pose.frame)
        };
        let base = vec![EvalPair::all_valid(pred.clone(), gt.clone())];
        let moved = vec![EvalPair::all_valid(shifted(&pred), shifted(&gt))];
        assert!((mpjpe(&base).unwrap() - mpjpe(&moved).unwrap()).abs() < 1e-9);
        assert!((nmpjpe(&base).unwrap() - nmpjpe(&moved).unwrap()).abs() < 1e-9);
        assert!((pmpjpe(&base).unwrap().0 - pmpjpe(&moved).unwrap().0).abs() < 1e-9);
    }

    #[test]
    fn pck3d_counts_threshold_hits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gt = random_pose(&mut rng, 17, 300.0);
        // Root untouched; half the remaining 16 joints off by 100 mm,
        // half by 200 mm.
        let pred = Pose3D::new(
            gt.joints
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    if j == 0 {
                        p
                    } else if j <= 8 {
                        p + Vec3::new(100.0, 0.0, 0.0)
                    } else {
                        p + Vec3::new(200.0, 0.0, 0.0)
                    }
                })
                .collect(),
            gt.frame,
        );
        let pairs = vec![EvalPair::all_valid(pred.clone(), gt.clone())];
        assert!((pck3d(&pairs, PCK3D_THRESHOLD_MM).unwrap() - 0.5).abs() < 1e-12);

        let far = Pose3D::new(
            gt.joints.iter().enumerate().map(|(j, &p)| if j == 0 { p } else { p + Vec3::new(200.0, 0.0, 0.0) }).collect(),
            gt.frame,
        );
        assert_eq!(pck3d(&[EvalPair::all_valid(far, gt)], PCK3D_THRESHOLD_MM).unwrap(), 0.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(mpjpe(&[]), Err(MetricError::EmptyInput)));
    }

    #[test]
    fn collinear_frames_are_skipped_with_count() {
        let gt = Pose3D::new(
            (0..5).map(|i| Vec3::new(i as f64 * 100.0, 0.0, 0.0)).collect(),
            CoordFrame::Camera,
        );
        let pred = gt.clone();
        let (_, skipped) = match pmpjpe(&[EvalPair::all_valid(pred, gt)]) {
            Ok(r) => r,
            // All frames skipped leaves nothing to average.
            Err(MetricError::NoValidJoints) => (0.0, 1),
            Err(other) => panic!("unexpected error {other:?}"),
        };
        assert_eq!(skipped, 1);
    }
}
