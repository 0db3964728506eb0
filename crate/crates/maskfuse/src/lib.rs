//! File formats, reports and the command-line driver around
//! [`maskfuse_core`].
//!
//! * [`wav`]: PCM16 / float32 WAV input, PCM16 output.
//! * [`mnw1`]: the network weight container.
//! * [`msk1`]: mask files.
//! * [`enhance`], [`evaluate`]: per-file and per-directory drivers.

pub mod cli;
pub mod enhance;
pub mod error;
pub mod evaluate;
pub mod mnw1;
pub mod msk1;
pub mod report;
pub mod wav;

pub use error::{Error, Result};
