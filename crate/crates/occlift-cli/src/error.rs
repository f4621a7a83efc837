//! Error type with the exit-code contract: 2 for configuration
//! problems, 3 for I/O, 4 for numerical failures.

use occlift_core::harness::HarnessError;
use occlift_core::nets::NetError;
use occlift_core::optim::OptimError;
use occlift_core::training::TrainError;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(&self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Io => 3,
            ErrorKind::Numerical => 4,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
            ErrorKind::Numerical => "numerical",
        }
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Config, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Io, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Numerical, message: message.into() }
    }

    /// One-line machine-parsable form written to stderr on failure.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": { "code": self.kind.exit_code(), "kind": self.kind.label(), "message": self.message }
        })
        .to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

fn is_numerical_train(e: &TrainError) -> bool {
    matches!(
        e,
        TrainError::NonFiniteLoss { .. }
            | TrainError::Optim(OptimError::NonFiniteGradient(_))
            | TrainError::Net(NetError::NonFiniteInput)
    )
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if is_numerical_train(&e) {
            CliError::numerical(e.to_string())
        } else {
            CliError::config(e.to_string())
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match &e {
            HarnessError::Train(t) if is_numerical_train(t) => CliError::numerical(e.to_string()),
            HarnessError::Net(NetError::NonFiniteInput) => CliError::numerical(e.to_string()),
            _ => CliError::config(e.to_string()),
        }
    }
}

macro_rules! config_error_from {
    ($($ty:path),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::config(e.to_string())
            }
        })*
    };
}

config_error_from!(
    occlift_core::geometry::GeometryError,
    occlift_core::graph::GraphError,
    occlift_core::masks::MaskError,
    occlift_core::metrics::MetricError,
    occlift_core::nets::NetError,
    occlift_core::skeleton::SkeletonError,
    occlift_core::synth::SynthError,
    occlift_core::tensor::ShapeError,
);
