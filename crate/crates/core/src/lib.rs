//! Signal-processing core for mask-driven multichannel speech enhancement.
//!
//! The crate is `no_std` and only needs an allocator. It covers the whole
//! numerical path: STFT analysis/synthesis, time-frequency mask algebra,
//! EM spatial clustering over inter-channel phase differences, BLSTM mask
//! inference, mask-driven MVDR beamforming, classical noise trackers, the
//! supervised reference builder, synthetic scenes and separation metrics.
//! File formats and the command-line driver live in the `maskfuse` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
mod math;

pub mod beamformer;
pub mod fft;
pub mod mask;
pub mod metrics;
pub mod net;
pub mod noise;
pub mod pipeline;
pub mod reference;
pub mod scene;
pub mod signal;
pub mod spatial;

pub use error::{Error, Result};
pub use mask::{CombineMode, Mask};
pub use net::{FeatureStats, LstmDirection, NetWeights};
pub use signal::{MultichannelSpectrogram, StftConfig, Waveform, Window};

/// Complex sample type used for spectrogram storage.
pub type Complex32 = num_complex::Complex<f32>;
/// Complex type used for accumulation and small matrix algebra.
pub type Complex64 = num_complex::Complex<f64>;
