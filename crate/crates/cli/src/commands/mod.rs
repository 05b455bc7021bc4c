//! One function per subcommand.

pub mod ablate;
pub mod evaluate;
pub mod preprocess;
pub mod report;
pub mod synth;
pub mod train;
