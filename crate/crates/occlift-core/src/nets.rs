//! The lifting network and the refinement network.
//!
//! The lifting net is a per-frame MLP from normalized 2D detections to
//! root-relative depths (mm). The refinement net runs one GCN per edge
//! relation over the masked node features of a T-frame window, fuses
//! the relation embeddings by elementwise max, and maps the flattened
//! embedding through a single linear layer to an incremental depth
//! correction for the target frame.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from the trait in no_std builds
use num_traits::Float;
use rand::Rng;
use thiserror::Error;

use crate::geometry::{backproject, denormalize2d, DepthDecomposition, GeometryError, Pose2D, Pose3D};
use crate::graph::NormalizedAdjacency;
use crate::tape::{NodeId, Tape, TapeError};
use crate::tensor::{ShapeError, Tensor};

/// Scale between the millimetre depths the geometry works in and the
/// O(1)-magnitude node features the refinement net sees.
pub const DEPTH_FEATURE_SCALE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("input has {got} values, expected {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("non-finite value in network input")]
    NonFiniteInput,
    #[error("expected {expected} relations, got {got} adjacencies")]
    RelationCount { expected: usize, got: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Lifting network shape: `n_hidden` ReLU+dropout layers of width
/// `hidden_size` between the 2*N_J input and N_J output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LNetConfig {
    pub n_joints: usize,
    pub hidden_size: usize,
    pub n_hidden: usize,
    pub dropout_rate: f64,
}

impl LNetConfig {
    pub fn with_defaults(n_joints: usize) -> Self {
        Self { n_joints, hidden_size: 2048, n_hidden: 2, dropout_rate: 0.10 }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.n_joints == 0 || self.hidden_size == 0 || self.n_hidden == 0 {
            return Err(NetError::Config(String::from("lnet dimensions must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NetError::Config(format!("dropout rate {} not in [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    /// (fan_in, fan_out) of each linear layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(2 * self.n_joints, self.hidden_size)];
        for _ in 1..self.n_hidden {
            dims.push((self.hidden_size, self.hidden_size));
        }
        dims.push((self.hidden_size, self.n_joints));
        dims
    }
}

/// Refinement network shape. One GCN per relation with two ReLU hidden
/// layers and a linear output embedding, fused by max pooling, then a
/// single linear layer from the flattened N x gcn_out embedding to N_J
/// depth increments for frame t_p.
#[derive(Debug, Clone, PartialEq)]
pub struct RNetConfig {
    pub t_frames: usize,
    pub n_joints: usize,
    pub n_relations: usize,
    pub gcn_hidden: (usize, usize),
    pub gcn_out: usize,
    pub t_p: usize,
}

impl RNetConfig {
    pub fn with_defaults(t_frames: usize, n_joints: usize, n_relations: usize, t_p: usize) -> Self {
        Self { t_frames, n_joints, n_relations, gcn_hidden: (16, 32), gcn_out: 64, t_p }
    }

    pub fn n_nodes(&self) -> usize {
        self.t_frames * self.n_joints
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.t_frames == 0 || self.n_joints == 0 || self.n_relations == 0 {
            return Err(NetError::Config(String::from("rnet dimensions must be positive")));
        }
        if self.gcn_hidden.0 == 0 || self.gcn_hidden.1 == 0 || self.gcn_out == 0 {
            return Err(NetError::Config(String::from("gcn layer sizes must be positive")));
        }
        if self.t_p >= self.t_frames {
            return Err(NetError::Config(format!(
                "target frame {} outside window of {} frames",
                self.t_p, self.t_frames
            )));
        }
        Ok(())
    }

    pub fn gcn_layer_dims(&self) -> [(usize, usize); 3] {
        [(1, self.gcn_hidden.0), (self.gcn_hidden.0, self.gcn_hidden.1), (self.gcn_hidden.1, self.gcn_out)]
    }

    pub fn fusion_dims(&self) -> (usize, usize) {
        (self.n_nodes() * self.gcn_out, self.n_joints)
    }
}

/// One linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Tensor,
    pub b: Tensor,
}

impl LayerParams {
    fn init(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = Tensor::matrix(
            fan_in,
            fan_out,
            (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect(),
        )
        .expect("sized data");
        let b = Tensor::row((0..fan_out).map(|_| rng.random_range(-bound..bound)).collect());
        Self { w, b }
    }
}

/// All trainable weights: Phi (lifting net) and Theta (per-relation
/// GCNs plus the embedding-fusion layer).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub lnet_cfg: LNetConfig,
    pub rnet_cfg: RNetConfig,
    pub lnet: Vec<LayerParams>,
    pub relations: Vec<Vec<LayerParams>>,
    pub fusion: LayerParams,
    pub seed: u64,
}

impl ModelState {
    /// Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    pub fn init(lnet_cfg: LNetConfig, rnet_cfg: RNetConfig, seed: u64) -> Result<Self, NetError> {
        lnet_cfg.validate()?;
        rnet_cfg.validate()?;
        if lnet_cfg.n_joints != rnet_cfg.n_joints {
            return Err(NetError::Config(String::from("lnet and rnet joint counts differ")));
        }
        let mut rng = crate::rng::seeded(seed);
        let lnet = lnet_cfg.layer_dims().iter().map(|&(i, o)| LayerParams::init(&mut rng, i, o)).collect();
        let relations = (0..rnet_cfg.n_relations)
            .map(|_| rnet_cfg.gcn_layer_dims().iter().map(|&(i, o)| LayerParams::init(&mut rng, i, o)).collect())
            .collect();
        let (fi, fo) = rnet_cfg.fusion_dims();
        let fusion = LayerParams::init(&mut rng, fi, fo);
        Ok(Self { lnet_cfg, rnet_cfg, lnet, relations, fusion, seed })
    }

    pub fn phi_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.lnet.len() {
            names.push(format!("lnet.l{i}.w"));
            names.push(format!("lnet.l{i}.b"));
        }
        names
    }

    pub fn theta_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for r in 0..self.relations.len() {
            for i in 0..self.relations[r].len() {
                names.push(format!("rnet.rel{r}.l{i}.w"));
                names.push(format!("rnet.rel{r}.l{i}.b"));
            }
        }
        names.push(String::from("rnet.fusion.w"));
        names.push(String::from("rnet.fusion.b"));
        names
    }

    pub fn phi_tensors(&self) -> Vec<&Tensor> {
        self.lnet.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn phi_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.lnet.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    pub fn theta_tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> =
            self.relations.iter().flatten().flat_map(|l| [&l.w, &l.b]).collect();
        out.push(&self.fusion.w);
        out.push(&self.fusion.b);
        out
    }

    pub fn theta_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> =
            self.relations.iter_mut().flatten().flat_map(|l| [&mut l.w, &mut l.b]).collect();
        out.push(&mut self.fusion.w);
        out.push(&mut self.fusion.b);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.phi_tensors().iter().chain(self.theta_tensors().iter()).all(|t| t.all_finite())
    }
}

/// Tape node ids of the bound parameters, in registry order.
pub struct TapeBindings {
    pub phi: Vec<NodeId>,
    pub theta: Vec<NodeId>,
}

/// Insert every parameter as a differentiable leaf.
pub fn bind_params(tape: &mut Tape, state: &ModelState) -> TapeBindings {
    let phi = state.phi_tensors().into_iter().map(|t| tape.param(t.clone())).collect();
    let theta = state.theta_tensors().into_iter().map(|t| tape.param(t.clone())).collect();
    TapeBindings { phi, theta }
}

/// Inverted-scaling dropout masks for one lifting-net pass over
/// `rows` stacked frames: entries are 0 with probability p, else
/// 1/(1-p). One mask per hidden layer.
pub fn sample_dropout_masks(cfg: &LNetConfig, rows: usize, rng: &mut impl Rng) -> Vec<Tensor> {
    let p = cfg.dropout_rate;
    let keep_scale = 1.0 / (1.0 - p);
    (0..cfg.n_hidden)
        .map(|_| {
            let data = (0..rows * cfg.hidden_size)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep_scale })
                .collect();
            Tensor::matrix(rows, cfg.hidden_size, data).expect("sized data")
        })
        .collect()
}

/// Stack normalized per-frame detections into the [T x 2N_J] input
/// matrix, joints interleaved as (x_0, y_0, x_1, y_1, ...).
pub fn lnet_input_matrix(frames: &[Pose2D]) -> Result<Tensor, NetError> {
    let n_joints = frames.first().map(|f| f.len()).unwrap_or(0);
    let mut data = Vec::with_capacity(frames.len() * 2 * n_joints);
    for f in frames {
        if f.len() != n_joints {
            return Err(NetError::InputLength { expected: n_joints * 2, got: f.len() * 2 });
        }
        for &[x, y] in &f.joints {
            data.push(x);
            data.push(y);
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(NetError::NonFiniteInput);
    }
    Ok(Tensor::matrix(frames.len(), 2 * n_joints, data)?)
}

/// Lifting-net forward over stacked frames. `input` is a constant
/// [rows x 2N_J] node; dropout masks, when given, must match
/// `sample_dropout_masks` shapes (training mode). Output is
/// [rows x N_J] root-relative depths in mm; the final linear layer
/// works at metre scale so the weights stay O(1).
pub fn lnet_forward_tape(
    tape: &mut Tape,
    phi: &[NodeId],
    cfg: &LNetConfig,
    input: NodeId,
    dropout: Option<&[Tensor]>,
) -> Result<NodeId, NetError> {
    let n_layers = cfg.n_hidden + 1;
    debug_assert_eq!(phi.len(), 2 * n_layers);
    let mut h = input;
    for layer in 0..n_layers {
        let w = phi[2 * layer];
        let b = phi[2 * layer + 1];
        let lin = tape.matmul(h, w)?;
        let lin = tape.add_row(lin, b)?;
        if layer < cfg.n_hidden {
            h = tape.relu(lin);
            if let Some(masks) = dropout {
                h = tape.mask_mul(h, masks[layer].clone())?;
            }
        } else {
            h = lin;
        }
    }
    let rows = tape.value(h).rows();
    let to_mm = Tensor::filled(vec![rows, cfg.n_joints], 1.0 / DEPTH_FEATURE_SCALE);
    Ok(tape.mask_mul(h, to_mm)?)
}

/// Single-frame evaluation-mode lifting: normalized detections in,
/// root-relative depths (mm) out. Deterministic: no dropout.
pub fn lnet_forward(state: &ModelState, p2d_norm: &Pose2D) -> Result<Vec<f64>, NetError> {
    if p2d_norm.len() != state.lnet_cfg.n_joints {
        return Err(NetError::InputLength {
            expected: state.lnet_cfg.n_joints,
            got: p2d_norm.len(),
        });
    }
    let mut tape = Tape::new();
    let input = lnet_input_matrix(core::slice::from_ref(p2d_norm))?;
    let input = tape.constant(input);
    let phi: Vec<NodeId> = state.phi_tensors().into_iter().map(|t| tape.param(t.clone())).collect();
    let out = lnet_forward_tape(&mut tape, &phi, &state.lnet_cfg, input, None)?;
    Ok(tape.value(out).data().to_vec())
}

/// Refinement-net forward. `h_nodes` is the [N x 1] node-feature column
/// (depths in metres, node order frame-major) and `mask`, when given,
/// is a 0/1 [N x 1] column applied before every relation GCN. Output is
/// the [1 x N_J] depth increment for frame t_p in mm.
pub fn rnet_forward_tape(
    tape: &mut Tape,
    theta: &[NodeId],
    cfg: &RNetConfig,
    adjacencies: &[NormalizedAdjacency],
    h_nodes: NodeId,
    mask: Option<&Tensor>,
) -> Result<NodeId, NetError> {
    if adjacencies.len() != cfg.n_relations {
        return Err(NetError::RelationCount { expected: cfg.n_relations, got: adjacencies.len() });
    }
    let masked = match mask {
        Some(m) => tape.mask_mul(h_nodes, m.clone())?,
        None => h_nodes,
    };

    let mut fused: Option<NodeId> = None;
    for (r, adj) in adjacencies.iter().enumerate() {
        let base = r * 6;
        let mut h = masked;
        for layer in 0..3 {
            let w = theta[base + 2 * layer];
            let b = theta[base + 2 * layer + 1];
            let prop = tape.adj_mul(adj.sparse(), h)?;
            let lin = tape.matmul(prop, w)?;
            let lin = tape.add_row(lin, b)?;
            h = if layer < 2 { tape.relu(lin) } else { lin };
        }
        fused = Some(match fused {
            None => h,
            Some(acc) => tape.max(acc, h)?,
        });
    }
    let z = fused.expect("at least one relation");

    let flat = tape.reshape(z, vec![1, cfg.n_nodes() * cfg.gcn_out])?;
    let fusion_w = theta[theta.len() - 2];
    let fusion_b = theta[theta.len() - 1];
    let delta = tape.matmul(flat, fusion_w)?;
    let delta = tape.add_row(delta, fusion_b)?;
    // Fusion operates at feature scale; bring the increment back to mm.
    let to_mm = Tensor::filled(vec![1, cfg.n_joints], 1.0 / DEPTH_FEATURE_SCALE);
    Ok(tape.mask_mul(delta, to_mm)?)
}

/// A T-frame single-view window ready for the networks: normalized
/// detections, the ground-truth root-depth series, and the camera that
/// produced the view.
#[derive(Debug, Clone)]
pub struct WindowInput {
    pub frames_norm: Vec<Pose2D>,
    pub droot: Vec<f64>,
    pub camera: crate::geometry::Camera,
    pub image_w: f64,
    pub image_h: f64,
}

/// Outcome of refining one window: depths and both poses at t_p.
#[derive(Debug, Clone)]
pub struct RefinedPose {
    pub lnet_depths: Vec<f64>,
    pub refined_depths: Vec<f64>,
    pub pose_camera: Pose3D,
    pub pose_world: Pose3D,
}

/// Full evaluation-mode pipeline for one window: lift all frames,
/// refine with the (default all-ones) mask, add the increment to the
/// target frame's depths, and back-project through the camera using the
/// ground-truth root depth.
pub fn refine_pose(
    state: &ModelState,
    window: &WindowInput,
    adjacencies: &[NormalizedAdjacency],
    mask: Option<&[bool]>,
) -> Result<RefinedPose, NetError> {
    let cfg = &state.rnet_cfg;
    if window.frames_norm.len() != cfg.t_frames {
        return Err(NetError::InputLength { expected: cfg.t_frames, got: window.frames_norm.len() });
    }
    let mut tape = Tape::new();
    let bindings = bind_params(&mut tape, state);
    let input = tape.constant(lnet_input_matrix(&window.frames_norm)?);
    let lifted = lnet_forward_tape(&mut tape, &bindings.phi, &state.lnet_cfg, input, None)?;

    let n = cfg.n_nodes();
    let column = tape.reshape(lifted, vec![n, 1])?;
    let h_nodes = tape.mask_mul(column, Tensor::filled(vec![n, 1], DEPTH_FEATURE_SCALE))?;
    let mask_tensor = mask.map(|m| {
        Tensor::column(m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    });
    let delta = rnet_forward_tape(
        &mut tape,
        &bindings.theta,
        cfg,
        adjacencies,
        h_nodes,
        mask_tensor.as_ref(),
    )?;

    let lnet_depths = tape.value(lifted).row_slice(cfg.t_p).to_vec();
    let refined_depths: Vec<f64> =
        lnet_depths.iter().zip(tape.value(delta).data()).map(|(d, inc)| d + inc).collect();

    let pixel_tp = denormalize2d(&window.frames_norm[cfg.t_p], window.image_w, window.image_h)?;
    let depth = DepthDecomposition { d_root: window.droot[cfg.t_p], d_rel: refined_depths.clone() };
    let (pose_camera, pose_world) = backproject(&window.camera, &pixel_tp, &depth)?;
    Ok(RefinedPose { lnet_depths, refined_depths, pose_camera, pose_world })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, normalize};
    use crate::skeleton::Skeleton;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_state(seed: u64) -> (ModelState, Vec<NormalizedAdjacency>) {
        let skel = Skeleton::new(
            vec!["root".into(), "a".into(), "b".into(), "c".into()],
            vec![(0, 1), (1, 2), (0, 3)],
            0,
        )
        .unwrap();
        let graph = build_graph(&skel, 5, &[1, 2]).unwrap();
        let adjs = normalize(&graph);
        let lnet = LNetConfig { n_joints: 4, hidden_size: 8, n_hidden: 2, dropout_rate: 0.1 };
        let rnet = RNetConfig {
            t_frames: 5,
            n_joints: 4,
            n_relations: adjs.len(),
            gcn_hidden: (4, 4),
            gcn_out: 8,
            t_p: 2,
        };
        (ModelState::init(lnet, rnet, seed).unwrap(), adjs)
    }

    fn random_norm_frames(rng: &mut ChaCha8Rng, t: usize, nj: usize) -> Vec<Pose2D> {
        use rand::Rng;
        (0..t)
            .map(|_| {
                Pose2D::all_visible(
                    (0..nj).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn zero_weights_produce_zero_lnet_output() {
        let (mut state, _) = toy_state(1);
        for layer in &mut state.lnet {
            layer.w = Tensor::zeros(layer.w.shape().to_vec());
            layer.b = Tensor::zeros(layer.b.shape().to_vec());
        }
        let p = Pose2D::all_visible(vec![[0.1, -0.2], [0.3, 0.4], [-0.5, 0.6], [0.0, 0.9]]);
        let out = lnet_forward(&state, &p).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_mode_lnet_is_deterministic() {
        let (state, _) = toy_state(2);
        let p = Pose2D::all_visible(vec![[0.1, -0.2], [0.3, 0.4], [-0.5, 0.6], [0.0, 0.9]]);
        let a = lnet_forward(&state, &p).unwrap();
        let b = lnet_forward(&state, &p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn nan_input_is_rejected() {
        let (state, _) = toy_state(3);
        let p = Pose2D::all_visible(vec![[f64::NAN, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(lnet_forward(&state, &p), Err(NetError::NonFiniteInput)));
    }

    #[test]
    fn zero_relation_weights_reduce_output_to_fusion_bias() {
        let (mut state, adjs) = toy_state(4);
        for rel in &mut state.relations {
            for layer in rel {
                layer.w = Tensor::zeros(layer.w.shape().to_vec());
                layer.b = Tensor::zeros(layer.b.shape().to_vec());
            }
        }
        let n = state.rnet_cfg.n_nodes();
        let mut tape = Tape::new();
        let bindings = bind_params(&mut tape, &state);
        let h = tape.constant(Tensor::filled(vec![n, 1], 0.3));
        let delta =
            rnet_forward_tape(&mut tape, &bindings.theta, &state.rnet_cfg, &adjs, h, None).unwrap();
        let want: Vec<f64> =
            state.fusion.b.data().iter().map(|b| b / DEPTH_FEATURE_SCALE).collect();
        for (got, want) in tape.value(delta).data().iter().zip(&want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn relation_order_does_not_change_rnet_output() {
        let (state, adjs) = toy_state(5);
        let n = state.rnet_cfg.n_nodes();
        let h_value = Tensor::column((0..n).map(|i| (i as f64 * 0.37).sin() * 0.2).collect());

        let run = |perm: &[usize]| {
            let mut view = state.clone();
            view.relations = perm.iter().map(|&i| state.relations[i].clone()).collect();
            let adj_view: Vec<_> = perm.iter().map(|&i| adjs[i].clone()).collect();
            let mut tape = Tape::new();
            let bindings = bind_params(&mut tape, &view);
            let h = tape.constant(h_value.clone());
            let out = rnet_forward_tape(&mut tape, &bindings.theta, &view.rnet_cfg, &adj_view, h, None)
                .unwrap();
            tape.value(out).data().to_vec()
        };

        let base = run(&[0, 1, 2]);
        for perm in [[1, 0, 2], [2, 1, 0], [0, 2, 1]] {
            let out = run(&perm);
            for (a, b) in base.iter().zip(&out) {
                assert_eq!(a.to_bits(), b.to_bits(), "permutation {perm:?} changed output");
            }
        }
    }

    #[test]
    fn single_relation_two_node_gcn_matches_hand_propagation() {
        // Two nodes joined by an edge: A_hat is the all-0.5 matrix. One
        // relation, 1->1->1->1 sized GCN with hand-set weights.
        let skel = Skeleton::new(vec!["r".into(), "c".into()], vec![(0, 1)], 0).unwrap();
        let graph = build_graph(&skel, 1, &[]).unwrap();
        let adjs = normalize(&graph);
        let lnet = LNetConfig { n_joints: 2, hidden_size: 2, n_hidden: 1, dropout_rate: 0.0 };
        let rnet = RNetConfig {
            t_frames: 1,
            n_joints: 2,
            n_relations: 1,
            gcn_hidden: (1, 1),
            gcn_out: 1,
            t_p: 0,
        };
        let mut state = ModelState::init(lnet, rnet, 0).unwrap();
        let set = |layer: &mut LayerParams, w: f64, b: f64| {
            layer.w = Tensor::from_vec(layer.w.shape().to_vec(), vec![w; layer.w.len()]).unwrap();
            layer.b = Tensor::from_vec(layer.b.shape().to_vec(), vec![b; layer.b.len()]).unwrap();
        };
        set(&mut state.relations[0][0], 2.0, 0.1);
        set(&mut state.relations[0][1], -1.0, 0.05);
        set(&mut state.relations[0][2], 3.0, -0.2);
        set(&mut state.fusion, 0.5, 0.0); // fusion w is [2x2] of 0.5

        let h0 = 0.4_f64;
        let h1 = -0.6_f64;
        // Hand evaluation: propagate = mean of the two (all-0.5 A_hat).
        let mean = 0.5 * (h0 + h1);
        let l1 = (mean * 2.0 + 0.1).max(0.0);
        let l2 = (l1 * -1.0 + 0.05).max(0.0); // both nodes identical now
        let l3 = l2 * 3.0 - 0.2;
        let fused = l3; // single relation
        let delta_feature = fused * 0.5 + fused * 0.5; // [1x2] flat times 0.5s
        let want = delta_feature / DEPTH_FEATURE_SCALE;

        let mut tape = Tape::new();
        let bindings = bind_params(&mut tape, &state);
        let h = tape.constant(Tensor::column(vec![h0, h1]));
        let out = rnet_forward_tape(&mut tape, &bindings.theta, &state.rnet_cfg, &adjs, h, None).unwrap();
        for &got in tape.value(out).data() {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn masking_target_frame_still_yields_finite_output() {
        let (state, adjs) = toy_state(6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frames = random_norm_frames(&mut rng, 5, 4);
        let cam = crate::geometry::Camera::look_at(
            "c".into(),
            crate::linalg::Vec3::new(0.0, 1500.0, -3000.0),
            crate::linalg::Vec3::new(0.0, 1000.0, 0.0),
            1000.0,
            [500.0, 500.0],
        )
        .unwrap();
        let window = WindowInput {
            frames_norm: frames,
            droot: vec![3000.0; 5],
            camera: cam,
            image_w: 1000.0,
            image_h: 1000.0,
        };
        // Mask out every node of the target frame (frame 2).
        let n = state.rnet_cfg.n_nodes();
        let mut mask = vec![true; n];
        for j in 0..4 {
            mask[2 * 4 + j] = false;
        }
        let refined = refine_pose(&state, &window, &adjs, Some(&mask)).unwrap();
        assert!(refined.refined_depths.iter().all(|d| d.is_finite()));
        assert!(refined.pose_world.joints.iter().all(|p| p.norm().is_finite()));
    }

    #[test]
    fn zero_rnet_weights_make_refined_pose_equal_lnet_pose() {
        let (mut state, adjs) = toy_state(7);
        for rel in &mut state.relations {
            for layer in rel {
                layer.w = Tensor::zeros(layer.w.shape().to_vec());
                layer.b = Tensor::zeros(layer.b.shape().to_vec());
            }
        }
        state.fusion.w = Tensor::zeros(state.fusion.w.shape().to_vec());
        state.fusion.b = Tensor::zeros(state.fusion.b.shape().to_vec());

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let frames = random_norm_frames(&mut rng, 5, 4);
        let cam = crate::geometry::Camera::look_at(
            "c".into(),
            crate::linalg::Vec3::new(500.0, 1200.0, -2800.0),
            crate::linalg::Vec3::new(0.0, 1000.0, 0.0),
            1000.0,
            [500.0, 500.0],
        )
        .unwrap();
        let window = WindowInput {
            frames_norm: frames.clone(),
            droot: vec![3000.0; 5],
            camera: cam,
            image_w: 1000.0,
            image_h: 1000.0,
        };
        let refined = refine_pose(&state, &window, &adjs, None).unwrap();
        let lnet_only = lnet_forward(&state, &frames[2]).unwrap();
        for (a, b) in refined.refined_depths.iter().zip(&lnet_only) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_masks_have_inverted_scaling() {
        let cfg = LNetConfig { n_joints: 4, hidden_size: 64, n_hidden: 2, dropout_rate: 0.25 };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let masks = sample_dropout_masks(&cfg, 3, &mut rng);
        assert_eq!(masks.len(), 2);
        let scale = 1.0 / 0.75;
        for m in &masks {
            assert_eq!(m.shape(), &[3, 64]);
            assert!(m.data().iter().all(|&v| v == 0.0 || (v - scale).abs() < 1e-15));
        }
        let zeros = masks[0].data().iter().filter(|&&v| v == 0.0).count();
        let rate = zeros as f64 / masks[0].len() as f64;
        assert!((rate - 0.25).abs() < 0.1, "empirical dropout rate {rate}");
    }
}
