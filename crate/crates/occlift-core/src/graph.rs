//! Spatio-temporal graph over a T-frame window: nodes are (frame,
//! joint) pairs, spatial edges follow the skeleton within a frame, and
//! each temporal stride contributes its own relation connecting the
//! same joint across frames.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from the trait in no_std builds
use num_traits::Float;
use thiserror::Error;

use crate::skeleton::Skeleton;
use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("window length must be at least 1")]
    EmptyWindow,
    #[error("temporal stride {stride} must satisfy 1 <= stride < window length {window}")]
    StrideOutOfRange { stride: usize, window: usize },
}

/// Edge relation type: one spatial relation plus one per stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    Spatial,
    Temporal { stride: usize },
}

impl RelationKind {
    pub fn label(&self) -> String {
        match self {
            RelationKind::Spatial => String::from("spatial"),
            RelationKind::Temporal { stride } => format!("stride{stride}"),
        }
    }
}

/// One relation's directed edge list (both directions stored, no
/// self-loops; those are added during normalization).
#[derive(Debug, Clone)]
pub struct Relation {
    pub kind: RelationKind,
    pub edges: Vec<(u32, u32)>,
}

/// Window graph with per-relation adjacency structure.
#[derive(Debug, Clone)]
pub struct STGraph {
    t_frames: usize,
    n_joints: usize,
    strides: Vec<usize>,
    relations: Vec<Relation>,
}

impl STGraph {
    pub fn t_frames(&self) -> usize {
        self.t_frames
    }

    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    pub fn n_nodes(&self) -> usize {
        self.t_frames * self.n_joints
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Relations in storage order: index 0 spatial, then one per stride
    /// in ascending order.
    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn node_index(&self, frame: usize, joint: usize) -> usize {
        debug_assert!(frame < self.t_frames && joint < self.n_joints);
        frame * self.n_joints + joint
    }

    pub fn node_of(&self, index: usize) -> (usize, usize) {
        (index / self.n_joints, index % self.n_joints)
    }
}

/// Build the window graph. Strides are treated as a set: deduplicated
/// and sorted ascending.
pub fn build_graph(skel: &Skeleton, t_frames: usize, strides: &[usize]) -> Result<STGraph, GraphError> {
    if t_frames == 0 {
        return Err(GraphError::EmptyWindow);
    }
    let mut strides: Vec<usize> = strides.to_vec();
    strides.sort_unstable();
    strides.dedup();
    for &s in &strides {
        if s == 0 || s >= t_frames {
            return Err(GraphError::StrideOutOfRange { stride: s, window: t_frames });
        }
    }

    let n_joints = skel.n_joints();
    let idx = |t: usize, j: usize| (t * n_joints + j) as u32;

    let mut relations = Vec::with_capacity(strides.len() + 1);
    let mut spatial = Vec::with_capacity(2 * t_frames * skel.edges().len());
    for t in 0..t_frames {
        for &(a, b) in skel.edges() {
            spatial.push((idx(t, a), idx(t, b)));
            spatial.push((idx(t, b), idx(t, a)));
        }
    }
    relations.push(Relation { kind: RelationKind::Spatial, edges: spatial });

    for &stride in &strides {
        let mut edges = Vec::with_capacity(2 * (t_frames - stride) * n_joints);
        for t in 0..t_frames - stride {
            for j in 0..n_joints {
                edges.push((idx(t, j), idx(t + stride, j)));
                edges.push((idx(t + stride, j), idx(t, j)));
            }
        }
        relations.push(Relation { kind: RelationKind::Temporal { stride }, edges });
    }

    Ok(STGraph { t_frames, n_joints, strides, relations })
}

/// Kipf-style symmetrically normalized adjacency with self-loops:
/// A_hat = D~^(-1/2) (A + I) D~^(-1/2). The dense matrix is the
/// contract; a sorted nonzero list rides along for fast propagation.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    pub kind: RelationKind,
    matrix: Tensor,
    sparse: SparseAdjacency,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn n_nodes(&self) -> usize {
        self.sparse.n_nodes()
    }

    pub fn sparse(&self) -> &SparseAdjacency {
        &self.sparse
    }
}

/// Nonzero entries of a normalized adjacency, sorted by (row, col).
/// Cheap to clone: tapes capture it by reference count.
#[derive(Debug, Clone)]
pub struct SparseAdjacency {
    n_nodes: usize,
    entries: Arc<Vec<(u32, u32, f64)>>,
}

impl SparseAdjacency {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    /// out += M * x with x row-major [n_nodes x cols].
    pub fn mul_into(&self, x: &[f64], cols: usize, out: &mut [f64]) {
        for &(r, c, w) in self.entries.iter() {
            let xi = &x[c as usize * cols..(c as usize + 1) * cols];
            let oi = &mut out[r as usize * cols..(r as usize + 1) * cols];
            for (o, &v) in oi.iter_mut().zip(xi) {
                *o += w * v;
            }
        }
    }

    /// out += M^T * x. Same entry list iterated with roles swapped, so
    /// no symmetry assumption is needed.
    pub fn mul_transpose_into(&self, x: &[f64], cols: usize, out: &mut [f64]) {
        for &(r, c, w) in self.entries.iter() {
            let xi = &x[r as usize * cols..(r as usize + 1) * cols];
            let oi = &mut out[c as usize * cols..(c as usize + 1) * cols];
            for (o, &v) in oi.iter_mut().zip(xi) {
                *o += w * v;
            }
        }
    }
}

/// Normalize every relation of the graph.
pub fn normalize(graph: &STGraph) -> Vec<NormalizedAdjacency> {
    let n = graph.n_nodes();
    graph
        .relations()
        .iter()
        .map(|rel| {
            let mut degree = vec![1.0f64; n]; // self-loop
            for &(a, _) in &rel.edges {
                degree[a as usize] += 1.0;
            }

            // Entries as 1/sqrt(d_i * d_j): exact for small integer
            // degree products and bitwise symmetric since the product
            // commutes.
            let mut matrix = Tensor::zeros(vec![n, n]);
            let data = matrix.data_mut();
            for (i, d) in degree.iter().enumerate() {
                data[i * n + i] = 1.0 / d;
            }
            for &(a, b) in &rel.edges {
                let (a, b) = (a as usize, b as usize);
                data[a * n + b] = 1.0 / (degree[a] * degree[b]).sqrt();
            }

            let mut entries: Vec<(u32, u32, f64)> = Vec::with_capacity(rel.edges.len() + n);
            for i in 0..n {
                for j in 0..n {
                    let w = data[i * n + j];
                    if w != 0.0 {
                        entries.push((i as u32, j as u32, w));
                    }
                }
            }

            NormalizedAdjacency {
                kind: rel.kind,
                matrix,
                sparse: SparseAdjacency { n_nodes: n, entries: Arc::new(entries) },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use proptest::prelude::*;

    fn count_edges(g: &STGraph, kind: RelationKind) -> usize {
        g.relations().iter().find(|r| r.kind == kind).map(|r| r.edges.len()).unwrap_or(0)
    }

    #[test]
    fn paper_configuration_edge_counts() {
        let g = build_graph(&Skeleton::h36m_17(), 31, &[1, 3, 5, 7]).unwrap();
        assert_eq!(g.n_nodes(), 527);
        assert_eq!(count_edges(&g, RelationKind::Spatial), 992);
        assert_eq!(count_edges(&g, RelationKind::Temporal { stride: 1 }), 1020);
        assert_eq!(count_edges(&g, RelationKind::Temporal { stride: 3 }), 952);
        assert_eq!(count_edges(&g, RelationKind::Temporal { stride: 5 }), 884);
        assert_eq!(count_edges(&g, RelationKind::Temporal { stride: 7 }), 816);
    }

    #[test]
    fn single_frame_graph_has_one_relation() {
        let g = build_graph(&Skeleton::h36m_17(), 1, &[]).unwrap();
        assert_eq!(g.relations().len(), 1);
        assert_eq!(count_edges(&g, RelationKind::Spatial), 2 * 16);
    }

    #[test]
    fn empty_stride_set_keeps_only_spatial_relation() {
        let g = build_graph(&Skeleton::h36m_17(), 31, &[]).unwrap();
        assert_eq!(g.relations().len(), 1);
        assert_eq!(g.relations()[0].kind, RelationKind::Spatial);
    }

    #[test]
    fn stride_out_of_range_is_rejected() {
        let err = build_graph(&Skeleton::h36m_17(), 31, &[31]).unwrap_err();
        assert_eq!(err, GraphError::StrideOutOfRange { stride: 31, window: 31 });
        assert!(build_graph(&Skeleton::h36m_17(), 5, &[0]).is_err());
    }

    #[test]
    fn node_index_is_a_bijection() {
        let g = build_graph(&Skeleton::sport_13(), 7, &[1, 2]).unwrap();
        let mut seen = BTreeSet::new();
        for t in 0..7 {
            for j in 0..13 {
                let idx = g.node_index(t, j);
                assert!(idx < g.n_nodes());
                assert!(seen.insert(idx));
                assert_eq!(g.node_of(idx), (t, j));
            }
        }
        assert_eq!(seen.len(), g.n_nodes());
    }

    #[test]
    fn edge_endpoints_respect_relation_kind() {
        let g = build_graph(&Skeleton::h36m_17(), 9, &[1, 4]).unwrap();
        for rel in g.relations() {
            for &(a, b) in &rel.edges {
                let (ta, ja) = g.node_of(a as usize);
                let (tb, jb) = g.node_of(b as usize);
                match rel.kind {
                    RelationKind::Spatial => assert_eq!(ta, tb),
                    RelationKind::Temporal { stride } => {
                        assert_eq!(ja, jb);
                        assert_eq!(ta.abs_diff(tb), stride);
                    }
                }
            }
        }
    }

    #[test]
    fn normalized_single_node_is_identity() {
        let skel = Skeleton::new(vec!["only".into()], vec![], 0).unwrap();
        let g = build_graph(&skel, 1, &[]).unwrap();
        let adj = normalize(&g);
        assert_eq!(adj[0].matrix().data(), &[1.0]);
    }

    #[test]
    fn normalized_two_connected_nodes_match_hand_evaluation() {
        // Two nodes, one edge: degrees with self-loops are 2 and 2, so
        // every entry of D~^(-1/2)(A+I)D~^(-1/2) is 0.5.
        let skel = Skeleton::new(vec!["a".into(), "b".into()], vec![(0, 1)], 0).unwrap();
        let g = build_graph(&skel, 1, &[]).unwrap();
        let adj = normalize(&g);
        assert_eq!(adj[0].matrix().data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn normalized_rows_of_regular_graph_sum_to_one() {
        // A single joint over T frames with stride 1 is a path; interior
        // nodes form a regular chain. Check a cycle-free regular case
        // instead: stride-1 relation over 2 frames is 1-regular.
        let skel = Skeleton::h36m_17();
        let g = build_graph(&skel, 2, &[1]).unwrap();
        let adj = normalize(&g);
        let temporal = adj.iter().find(|a| a.kind == RelationKind::Temporal { stride: 1 }).unwrap();
        let n = temporal.n_nodes();
        for r in 0..n {
            let sum: f64 = temporal.matrix().row_slice(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {r} sums to {sum}");
        }
    }

    #[test]
    fn normalized_adjacency_is_exactly_symmetric() {
        let g = build_graph(&Skeleton::h36m_17(), 12, &[1, 3]).unwrap();
        for adj in normalize(&g) {
            let n = adj.n_nodes();
            let m = adj.matrix().data();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(m[i * n + j].to_bits(), m[j * n + i].to_bits());
                }
            }
        }
    }

    #[test]
    fn sparse_multiply_matches_dense() {
        let g = build_graph(&Skeleton::sport_13(), 5, &[1, 2]).unwrap();
        let adjs = normalize(&g);
        let n = g.n_nodes();
        let x: Vec<f64> = (0..n * 3).map(|i| (i as f64 * 0.7).sin()).collect();
        let xt = Tensor::matrix(n, 3, x.clone()).unwrap();
        for adj in &adjs {
            let dense = adj.matrix().matmul(&xt).unwrap();
            let mut sparse_out = vec![0.0; n * 3];
            adj.sparse().mul_into(&x, 3, &mut sparse_out);
            for (d, s) in dense.data().iter().zip(&sparse_out) {
                assert!((d - s).abs() < 1e-12);
            }
        }
    }

    /// Closed-form directed edge counts versus explicit enumeration,
    /// mirroring the stride/window sweeps.
    #[test]
    fn edge_count_formulas_hold_over_sweep_ranges() {
        let skels = [Skeleton::h36m_17(), Skeleton::sport_13()];
        let nested: &[&[usize]] = &[&[], &[1], &[1, 3], &[1, 3, 5], &[1, 3, 5, 7], &[1, 3, 5, 7, 9, 11]];
        for skel in &skels {
            let nj = skel.n_joints();
            for t in 1..=61usize {
                for strides in nested {
                    let valid: Vec<usize> = strides.iter().copied().filter(|&s| s < t).collect();
                    if valid.len() != strides.len() {
                        continue;
                    }
                    let g = build_graph(skel, t, &valid).unwrap();
                    assert_eq!(count_edges(&g, RelationKind::Spatial), 2 * t * (nj - 1));
                    for &s in &valid {
                        assert_eq!(
                            count_edges(&g, RelationKind::Temporal { stride: s }),
                            2 * (t - s) * nj,
                            "t={t} stride={s}"
                        );
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn edge_counts_match_formulas_for_random_stride_subsets(
            t in 2usize..=61,
            subset in proptest::collection::btree_set(1usize..=11, 0..=6),
            use_17 in proptest::bool::ANY,
        ) {
            let skel = if use_17 { Skeleton::h36m_17() } else { Skeleton::sport_13() };
            let strides: Vec<usize> = subset.into_iter().filter(|&s| s < t).collect();
            let g = build_graph(&skel, t, &strides).unwrap();
            prop_assert_eq!(g.relations().len(), strides.len() + 1);
            prop_assert_eq!(count_edges(&g, RelationKind::Spatial), 2 * t * (skel.n_joints() - 1));
            for &s in &strides {
                prop_assert_eq!(
                    count_edges(&g, RelationKind::Temporal { stride: s }),
                    2 * (t - s) * skel.n_joints()
                );
            }
        }
    }
}
