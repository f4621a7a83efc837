//! File formats, run manifests, and the command implementations behind
//! the `occlift` binary. The algorithmic core is sans-IO; everything
//! that touches the filesystem or the clock lives here.

pub mod commands;
pub mod error;
pub mod formats;
pub mod manifest;

pub use error::{CliError, ErrorKind};
