//! One module per subcommand.

pub mod ablate;
pub mod eval;
pub mod masks;
pub mod stats;
pub mod synth;
pub mod train;
pub mod triangulate;
