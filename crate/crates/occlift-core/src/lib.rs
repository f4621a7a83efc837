//! occlift-core: occlusion-robust 2D-to-3D human pose lifting.
//!
//! A lifting MLP maps per-frame 2D joint detections to root-relative
//! depths; a spatio-temporal graph refinement network trained with
//! structured binary occlusion masks corrects the depths of a target
//! frame. The crate also carries the supporting numerics (dense
//! tensors, tape-based reverse-mode differentiation, Adam, a 3x3 SVD),
//! camera geometry with DLT triangulation, MPJPE-family metrics, and a
//! synthetic motion-capture generator used for experiments.
//!
//! This crate is sans-IO and `no_std`-compatible (`alloc` required).
//! File formats, the CLI, and anything that touches the filesystem or
//! the clock live in the companion `occlift-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod config;
pub mod geometry;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod masks;
pub mod metrics;
pub mod nets;
pub mod optim;
pub mod rng;
pub mod skeleton;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod training;

pub use config::ExperimentConfig;
pub use tensor::Tensor;
