//! Skeleton topology: a joint tree with the root at index 0.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SkeletonError {
    #[error("skeleton needs at least one joint")]
    Empty,
    #[error("expected {expected} edges for a tree over {joints} joints, got {got}")]
    EdgeCount { expected: usize, joints: usize, got: usize },
    #[error("edge ({0}, {1}) references a joint out of range")]
    EdgeOutOfRange(usize, usize),
    #[error("edges do not form a connected acyclic tree")]
    NotATree,
    #[error("{got} joint names for {joints} joints")]
    NameCount { got: usize, joints: usize },
    #[error("root joint must be index 0, got {0}")]
    RootNotZero(usize),
}

/// Joint tree. Edges are (parent, child) pairs; the root-relative depth
/// convention fixes the root at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    n_joints: usize,
    names: Vec<String>,
    edges: Vec<(usize, usize)>,
    root_index: usize,
}

impl Skeleton {
    pub fn new(
        names: Vec<String>,
        edges: Vec<(usize, usize)>,
        root_index: usize,
    ) -> Result<Self, SkeletonError> {
        let n_joints = names.len();
        if n_joints == 0 {
            return Err(SkeletonError::Empty);
        }
        if root_index != 0 {
            return Err(SkeletonError::RootNotZero(root_index));
        }
        if edges.len() != n_joints - 1 {
            return Err(SkeletonError::EdgeCount { expected: n_joints - 1, joints: n_joints, got: edges.len() });
        }
        for &(a, b) in &edges {
            if a >= n_joints || b >= n_joints {
                return Err(SkeletonError::EdgeOutOfRange(a, b));
            }
        }
        // N-1 edges and connected implies acyclic.
        let mut adj = vec![Vec::new(); n_joints];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n_joints];
        let mut stack = vec![root_index];
        seen[root_index] = true;
        while let Some(j) = stack.pop() {
            for &nb in &adj[j] {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(SkeletonError::NotATree);
        }
        Ok(Self { n_joints, names, edges, root_index })
    }

    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    /// All joints within the given graph distance of `seed` (inclusive).
    pub fn joints_within(&self, seed: usize, distance: usize) -> Vec<usize> {
        let mut adj = vec![Vec::new(); self.n_joints];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut dist = vec![usize::MAX; self.n_joints];
        dist[seed] = 0;
        let mut frontier = vec![seed];
        for d in 1..=distance {
            let mut next = Vec::new();
            for &j in &frontier {
                for &nb in &adj[j] {
                    if dist[nb] == usize::MAX {
                        dist[nb] = d;
                        next.push(nb);
                    }
                }
            }
            frontier = next;
        }
        (0..self.n_joints).filter(|&j| dist[j] != usize::MAX).collect()
    }

    /// 17-joint body in the common H36M layout: pelvis root, leg chains,
    /// spine to head, and arm chains hanging off the thorax.
    pub fn h36m_17() -> Skeleton {
        let names = [
            "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "spine",
            "thorax", "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
            "r_elbow", "r_wrist",
        ];
        let edges = vec![
            (0, 1),
            (1, 2),
            (2, 3),
            (0, 4),
            (4, 5),
            (5, 6),
            (0, 7),
            (7, 8),
            (8, 9),
            (9, 10),
            (8, 11),
            (11, 12),
            (12, 13),
            (8, 14),
            (14, 15),
            (15, 16),
        ];
        Skeleton::new(names.iter().map(|n| n.to_string()).collect(), edges, 0)
            .expect("built-in skeleton is a valid tree")
    }

    /// 13-joint variant used for the sport-style experiments.
    pub fn sport_13() -> Skeleton {
        let names = [
            "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "neck",
            "head", "l_shoulder", "l_wrist", "r_shoulder", "r_wrist",
        ];
        let edges = vec![
            (0, 1),
            (1, 2),
            (2, 3),
            (0, 4),
            (4, 5),
            (5, 6),
            (0, 7),
            (7, 8),
            (7, 9),
            (9, 10),
            (7, 11),
            (11, 12),
        ];
        Skeleton::new(names.iter().map(|n| n.to_string()).collect(), edges, 0)
            .expect("built-in skeleton is a valid tree")
    }
}
