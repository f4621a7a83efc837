//! Fixed set of precomputed structured binary node masks
//! M = Omega(N_M, beta, alpha) over the window graph. Each mask has
//! exactly beta = floor(N / alpha) ones; its zeros are laid down as
//! temporally contiguous per-joint runs so a dropped joint stays
//! dropped for a stretch of frames, the way real occlusions behave.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from the trait in no_std builds
use num_traits::Float;
use rand::Rng;
use thiserror::Error;

use crate::rng::seeded;
use crate::tensor::{ShapeError, Tensor};

/// Dropped runs cover at least this many frames (clamped to the window).
pub const MIN_RUN: usize = 3;
/// And at most this many.
pub const MAX_RUN: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("alpha must be >= 1, got {0}")]
    AlphaTooSmall(f64),
    #[error("derived beta = floor({n}/{alpha}) is out of [1, {n}]")]
    BetaOutOfRange { n: usize, alpha: f64 },
    #[error("mask set must contain at least one mask")]
    NoMasks,
    #[error("window must have at least one frame and one joint")]
    EmptyGrid,
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Parameters of the mask-generating function. The node grid is
/// t_frames x n_joints in joint-major node order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskParams {
    pub n_masks: usize,
    pub alpha: f64,
    pub t_frames: usize,
    pub n_joints: usize,
    pub seed: u64,
}

impl MaskParams {
    pub fn n_nodes(&self) -> usize {
        self.t_frames * self.n_joints
    }

    /// Number of ones per mask: beta = floor(N / alpha).
    pub fn beta(&self) -> usize {
        (self.n_nodes() as f64 / self.alpha).floor() as usize
    }

    /// Rate of nodes masked: tau_bar = 1 - beta / N.
    pub fn masked_rate(&self) -> f64 {
        1.0 - self.beta() as f64 / self.n_nodes() as f64
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        if self.t_frames == 0 || self.n_joints == 0 {
            return Err(MaskError::EmptyGrid);
        }
        if self.n_masks == 0 {
            return Err(MaskError::NoMasks);
        }
        if !(self.alpha >= 1.0) {
            return Err(MaskError::AlphaTooSmall(self.alpha));
        }
        let beta = self.beta();
        if beta == 0 || beta > self.n_nodes() {
            return Err(MaskError::BetaOutOfRange { n: self.n_nodes(), alpha: self.alpha });
        }
        Ok(())
    }
}

/// The generated masks, fixed after construction. Regeneration from the
/// same parameters is bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    params: MaskParams,
    masks: Vec<Vec<bool>>,
}

impl MaskSet {
    pub fn params(&self) -> &MaskParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn mask(&self, i: usize) -> &[bool] {
        &self.masks[i]
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    /// Mask i as a [N x 1] 0/1 column for row-wise feature masking.
    pub fn mask_column(&self, i: usize) -> Tensor {
        Tensor::column(self.masks[i].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }

    /// Rebuild from stored set-bit indices (deserialization path).
    pub fn from_set_bits(params: MaskParams, set_bits: &[Vec<usize>]) -> Result<Self, MaskError> {
        params.validate()?;
        let n = params.n_nodes();
        let masks = set_bits
            .iter()
            .map(|bits| {
                let mut m = vec![false; n];
                for &b in bits {
                    if b < n {
                        m[b] = true;
                    }
                }
                m
            })
            .collect();
        Ok(Self { params, masks })
    }
}

/// Generate the mask set. For each mask, joints and start frames are
/// sampled uniformly and a contiguous run of that joint's frames is
/// dropped (run length uniform in [MIN_RUN, MAX_RUN], both clamped to
/// the window), skipping nodes dropped earlier, until exactly N - beta
/// nodes are dropped; the final run is truncated to land on the count.
pub fn generate_masks(params: MaskParams) -> Result<MaskSet, MaskError> {
    params.validate()?;
    let n = params.n_nodes();
    let beta = params.beta();
    let t = params.t_frames;
    let nj = params.n_joints;
    let min_run = MIN_RUN.min(t);
    let max_run = MAX_RUN.min(t);

    let mut rng = seeded(params.seed);
    let mut masks = Vec::with_capacity(params.n_masks);
    for _ in 0..params.n_masks {
        let mut dropped = vec![false; n];
        let mut budget = n - beta;
        while budget > 0 {
            let joint = rng.random_range(0..nj);
            // Keep full-length room for the run so every fresh interval
            // spans at least min_run frames.
            let t0 = rng.random_range(0..=t - min_run);
            let run = rng.random_range(min_run..=max_run);
            for frame in t0..(t0 + run).min(t) {
                if budget == 0 {
                    break;
                }
                let node = frame * nj + joint;
                if !dropped[node] {
                    dropped[node] = true;
                    budget -= 1;
                }
            }
        }
        masks.push(dropped.iter().map(|&d| !d).collect());
    }
    Ok(MaskSet { params, masks })
}

/// Zero the rows of an [N x d] feature matrix wherever the mask is 0.
/// This is the evaluation-path twin of the tape's mask multiply.
pub fn apply_mask(features: &Tensor, mask: &[bool]) -> Result<Tensor, MaskError> {
    let rows = features.rows();
    if rows != mask.len() {
        return Err(ShapeError::Mismatch { expected: vec![mask.len(), features.cols()], got: features.shape().to_vec() }.into());
    }
    let cols = features.cols();
    let mut data = features.data().to_vec();
    for (r, &keep) in mask.iter().enumerate() {
        if !keep {
            data[r * cols..(r + 1) * cols].fill(0.0);
        }
    }
    Ok(Tensor::matrix(rows, cols, data)?)
}

/// Summary statistics of a mask set.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStats {
    /// 1 - beta / N.
    pub masked_rate: f64,
    /// Mean over mask pairs of |M_i AND M_j| / beta; absent for a
    /// single mask.
    pub mean_pairwise_overlap: Option<f64>,
    /// (run length, count) of contiguous dropped runs per joint,
    /// aggregated over masks, ascending by length.
    pub run_length_hist: Vec<(usize, u64)>,
    /// Per-mask popcounts (all equal to beta by construction).
    pub popcounts: Vec<usize>,
}

pub fn mask_stats(set: &MaskSet) -> MaskStats {
    let params = set.params();
    let beta = params.beta();
    let n_masks = set.len();

    let popcounts: Vec<usize> = set.masks().iter().map(|m| m.iter().filter(|&&b| b).count()).collect();

    let mean_pairwise_overlap = (n_masks > 1).then(|| {
        let mut total = 0.0;
        let mut pairs = 0u64;
        for i in 0..n_masks {
            for j in i + 1..n_masks {
                let inter = set.mask(i).iter().zip(set.mask(j)).filter(|(&a, &b)| a && b).count();
                total += inter as f64 / beta as f64;
                pairs += 1;
            }
        }
        total / pairs as f64
    });

    let mut hist: Vec<(usize, u64)> = Vec::new();
    for mask in set.masks() {
        for runs in dropped_runs_per_joint(mask, params.t_frames, params.n_joints) {
            for run in runs {
                match hist.iter_mut().find(|(l, _)| *l == run) {
                    Some((_, c)) => *c += 1,
                    None => hist.push((run, 1)),
                }
            }
        }
    }
    hist.sort_unstable();

    MaskStats { masked_rate: params.masked_rate(), mean_pairwise_overlap, run_length_hist: hist, popcounts }
}

/// Lengths of contiguous dropped-frame runs, per joint.
pub fn dropped_runs_per_joint(mask: &[bool], t_frames: usize, n_joints: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n_joints];
    for (joint, runs) in out.iter_mut().enumerate() {
        let mut run = 0usize;
        for frame in 0..t_frames {
            if !mask[frame * n_joints + joint] {
                run += 1;
            } else if run > 0 {
                runs.push(run);
                run = 0;
            }
        }
        if run > 0 {
            runs.push(run);
        }
    }
    out
}
