//! The resolved configuration of one training-plus-evaluation run.
//! Defaults are the reference operating point: T=31 frames, target
//! frame 15, temporal strides {1, 3, 5, 7}, 32 structured masks at
//! alpha 1.8, a 2048-wide lifting MLP, 16/32/64 GCN layers, 1000
//! warm-up iterations at 1e-4 and joint learning rates 5e-5 / 1e-4.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::masks::MaskParams;
use crate::nets::{LNetConfig, RNetConfig};
use crate::training::{TrainConfig, TrainError, TrainMode};

/// Node-masking regime, by parameters (materialized per run seed).
#[derive(Debug, Clone, PartialEq)]
pub enum MaskingSpec {
    None,
    Structured { n_masks: usize, alpha: f64 },
    Bernoulli { rate: f64 },
}

impl MaskingSpec {
    pub fn label(&self) -> String {
        match self {
            MaskingSpec::None => String::from("none"),
            MaskingSpec::Structured { n_masks, alpha } => {
                alloc::format!("structured(n={n_masks},alpha={alpha})")
            }
            MaskingSpec::Bernoulli { rate } => alloc::format!("bernoulli({rate})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub t_frames: usize,
    pub t_p: usize,
    pub strides: Vec<usize>,
    pub masking: MaskingSpec,
    pub lnet_hidden: usize,
    pub lnet_layers: usize,
    pub lnet_dropout: f64,
    pub gcn_hidden: (usize, usize),
    pub gcn_out: usize,
    pub train: TrainConfig,
    /// Stride between evaluated test windows.
    pub eval_window_stride: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            t_frames: 31,
            t_p: 15,
            strides: vec![1, 3, 5, 7],
            masking: MaskingSpec::Structured { n_masks: 32, alpha: 1.8 },
            lnet_hidden: 2048,
            lnet_layers: 2,
            lnet_dropout: 0.10,
            gcn_hidden: (16, 32),
            gcn_out: 64,
            train: TrainConfig::default(),
            eval_window_stride: 15,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.t_p >= self.t_frames {
            return Err(TrainError::Config(alloc::format!(
                "target frame {} outside window of {} frames",
                self.t_p,
                self.t_frames
            )));
        }
        for &s in &self.strides {
            if s == 0 || s >= self.t_frames {
                return Err(TrainError::Config(alloc::format!(
                    "stride {s} must satisfy 1 <= stride < {}",
                    self.t_frames
                )));
            }
        }
        if self.eval_window_stride == 0 {
            return Err(TrainError::Config(String::from("eval window stride must be positive")));
        }
        self.train.validate()
    }

    pub fn lnet_config(&self, n_joints: usize) -> LNetConfig {
        LNetConfig {
            n_joints,
            hidden_size: self.lnet_hidden,
            n_hidden: self.lnet_layers,
            dropout_rate: self.lnet_dropout,
        }
    }

    pub fn rnet_config(&self, n_joints: usize) -> RNetConfig {
        RNetConfig {
            t_frames: self.t_frames,
            n_joints,
            n_relations: self.strides.len() + 1,
            gcn_hidden: self.gcn_hidden,
            gcn_out: self.gcn_out,
            t_p: self.t_p,
        }
    }

    pub fn mask_params(&self, n_joints: usize, seed: u64) -> Option<MaskParams> {
        match self.masking {
            MaskingSpec::Structured { n_masks, alpha } => Some(MaskParams {
                n_masks,
                alpha,
                t_frames: self.t_frames,
                n_joints,
                seed,
            }),
            _ => None,
        }
    }

    pub fn mode(&self) -> TrainMode {
        self.train.mode
    }
}
