use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),
    #[error("window/hop pair does not satisfy constant overlap-add (fft {fft_size}, hop {hop})")]
    NonCola { fft_size: usize, hop: usize },
    #[error("signal of {len} samples is shorter than one frame ({fft_size})")]
    SignalTooShort { len: usize, fft_size: usize },
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("channel {channel} out of range ({channels} channels)")]
    ChannelOutOfRange { channel: usize, channels: usize },
    #[error("need at least {needed} channels, got {got}")]
    TooFewChannels { needed: usize, got: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("unknown combination mode `{0}` (expected average, max or min)")]
    UnknownMode(String),
    #[error("unknown method `{given}`; valid methods: {valid}")]
    UnknownMethod { given: String, valid: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate mask: {0}")]
    DegenerateMask(&'static str),
    #[error("degenerate covariance at frequency bin {bin}")]
    DegenerateCovariance { bin: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("tensor `{name}`: {reason}")]
    Tensor { name: String, reason: String },
}
