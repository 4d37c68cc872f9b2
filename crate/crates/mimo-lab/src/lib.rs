//! Monte-Carlo BER benchmark harness for the `mimo-core` receivers:
//! run configuration, the sweep engine, result summaries, and model
//! checkpoint files.

pub mod config;
pub mod model_io;
pub mod summary;
pub mod sweep;

pub use config::{DnnConfig, ReceiverKind, RunConfig, SnrDb};
pub use summary::{summarize, Summary};
pub use sweep::{run_ber_sweep, BerRecord, SweepOutput};
