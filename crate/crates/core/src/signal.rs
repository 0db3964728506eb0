//! Waveforms and the STFT analysis/synthesis framework.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::fft::Fft;
use crate::math::{cos, sqrt, PI};
use crate::{Complex32, Complex64, Error, Result};

/// Multichannel audio, one sample vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidWaveform("no channels".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidWaveform("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidWaveform("non-finite sample".into()));
        }
        Ok(Waveform { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Extracts one channel as a mono waveform.
    pub fn select(&self, c: usize) -> Result<Waveform> {
        if c >= self.num_channels() {
            return Err(Error::ChannelOutOfRange { channel: c, channels: self.num_channels() });
        }
        Ok(Waveform { channels: vec![self.channels[c].clone()], sample_rate: self.sample_rate })
    }

    /// Zero-pads or truncates every channel to `len` samples.
    pub fn resized(&self, len: usize) -> Waveform {
        let channels = self
            .channels
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.resize(len, 0.0);
                c
            })
            .collect();
        Waveform { channels, sample_rate: self.sample_rate }
    }
}

/// Analysis/synthesis window pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// Square-root periodic Hann for both analysis and synthesis.
    #[default]
    SqrtHann,
    /// Periodic Hann analysis with rectangular synthesis.
    Hann,
}

impl Window {
    pub fn analysis(self, n: usize) -> Vec<f64> {
        let hann = hann(n);
        match self {
            Window::SqrtHann => hann.into_iter().map(sqrt).collect(),
            Window::Hann => hann,
        }
    }

    pub fn synthesis(self, n: usize) -> Vec<f64> {
        match self {
            Window::SqrtHann => hann(n).into_iter().map(sqrt).collect(),
            Window::Hann => vec![1.0; n],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::SqrtHann => "sqrt-hann",
            Window::Hann => "hann",
        }
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * cos(2.0 * PI * i as f64 / n as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig { fft_size: 1024, hop: 512, window: Window::SqrtHann }
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, hop: usize) -> Self {
        StftConfig { fft_size, hop, window: Window::SqrtHann }
    }

    pub fn freq_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of frames for a signal of `len` samples (no padding).
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "fft size must be even and at least 2, got {}",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "hop must satisfy 0 < hop <= fft size, got {}",
                self.hop
            )));
        }
        Ok(())
    }

    /// Returns the overlap-add gain `sum_k a(n + k hop) s(n + k hop)`, or an
    /// error when it is not constant in `n`.
    pub fn cola_gain(&self) -> Result<f64> {
        self.validate()?;
        let a = self.window.analysis(self.fft_size);
        let s = self.window.synthesis(self.fft_size);
        let profile: Vec<f64> = (0..self.hop)
            .map(|n| (n..self.fft_size).step_by(self.hop).map(|i| a[i] * s[i]).sum())
            .collect();
        let max = profile.iter().cloned().fold(f64::MIN, f64::max);
        let min = profile.iter().cloned().fold(f64::MAX, f64::min);
        if !(min > 0.0) || max - min > 1e-9 * max {
            return Err(Error::NonCola { fft_size: self.fft_size, hop: self.hop });
        }
        Ok(profile.iter().sum::<f64>() / profile.len() as f64)
    }
}

/// Complex STFT tensor laid out `[channel][frequency][frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSpectrogram {
    values: Vec<Complex32>,
    channels: usize,
    freq_bins: usize,
    frames: usize,
    config: StftConfig,
    sample_rate: u32,
}

impl MultichannelSpectrogram {
    pub fn zeros(channels: usize, frames: usize, config: StftConfig, sample_rate: u32) -> Self {
        let freq_bins = config.freq_bins();
        MultichannelSpectrogram {
            values: vec![Complex32::new(0.0, 0.0); channels * freq_bins * frames],
            channels,
            freq_bins,
            frames,
            config,
            sample_rate,
        }
    }

    /// Builds a spectrogram from `[channel][frequency][frame]`-ordered values.
    pub fn from_values(
        values: Vec<Complex32>,
        channels: usize,
        frames: usize,
        config: StftConfig,
        sample_rate: u32,
    ) -> Result<Self> {
        let freq_bins = config.freq_bins();
        if values.len() != channels * freq_bins * frames {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {channels}x{freq_bins}x{frames}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("spectrogram"));
        }
        Ok(MultichannelSpectrogram { values, channels, freq_bins, frames, config, sample_rate })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn values(&self) -> &[Complex32] {
        &self.values
    }

    #[inline]
    fn index(&self, c: usize, k: usize, t: usize) -> usize {
        (c * self.freq_bins + k) * self.frames + t
    }

    #[inline]
    pub fn get(&self, c: usize, k: usize, t: usize) -> Complex32 {
        self.values[self.index(c, k, t)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, k: usize, t: usize, v: Complex32) {
        let i = self.index(c, k, t);
        self.values[i] = v;
    }

    /// All frames of one channel at one frequency.
    pub fn row(&self, c: usize, k: usize) -> &[Complex32] {
        let start = self.index(c, k, 0);
        &self.values[start..start + self.frames]
    }

    pub fn row_mut(&mut self, c: usize, k: usize) -> &mut [Complex32] {
        let start = self.index(c, k, 0);
        &mut self.values[start..start + self.frames]
    }

    /// Copies channel `c` into a single-channel spectrogram.
    pub fn channel(&self, c: usize) -> Result<MultichannelSpectrogram> {
        self.check_channel(c)?;
        let per = self.freq_bins * self.frames;
        Ok(MultichannelSpectrogram {
            values: self.values[c * per..(c + 1) * per].to_vec(),
            channels: 1,
            ..*self
        })
    }

    pub fn check_channel(&self, c: usize) -> Result<()> {
        if c >= self.channels {
            Err(Error::ChannelOutOfRange { channel: c, channels: self.channels })
        } else {
            Ok(())
        }
    }

    pub fn same_shape(&self, other: &MultichannelSpectrogram) -> bool {
        self.channels == other.channels
            && self.freq_bins == other.freq_bins
            && self.frames == other.frames
    }

    /// Stacked multichannel vector at one time-frequency point.
    pub fn snapshot(&self, k: usize, t: usize, out: &mut [Complex64]) {
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let v = self.get(c, k, t);
            *o = Complex64::new(v.re as f64, v.im as f64);
        }
    }
}

/// Short-time Fourier transform of every channel, without padding.
pub fn stft(w: &Waveform, cfg: StftConfig) -> Result<MultichannelSpectrogram> {
    cfg.validate()?;
    let n = cfg.fft_size;
    if w.len() < n {
        return Err(Error::SignalTooShort { len: w.len(), fft_size: n });
    }
    let frames = cfg.num_frames(w.len());
    let window = cfg.window.analysis(n);
    let plan = Fft::new(n);
    let mut spec = MultichannelSpectrogram::zeros(w.num_channels(), frames, cfg, w.sample_rate());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (c, x) in w.channels().iter().enumerate() {
        for t in 0..frames {
            let start = t * cfg.hop;
            for (b, (s, win)) in buf.iter_mut().zip(x[start..start + n].iter().zip(&window)) {
                *b = Complex64::new(s * win, 0.0);
            }
            plan.forward(&mut buf);
            for (k, v) in buf.iter().take(cfg.freq_bins()).enumerate() {
                spec.set(c, k, t, Complex32::new(v.re as f32, v.im as f32));
            }
        }
    }
    Ok(spec)
}

/// Weighted overlap-add inverse of [`stft`]. Output length is
/// `(frames - 1) * hop + fft_size`.
pub fn istft(spec: &MultichannelSpectrogram) -> Result<Waveform> {
    let cfg = spec.config();
    let gain = cfg.cola_gain()?;
    let n = cfg.fft_size;
    let frames = spec.frames();
    if frames == 0 {
        return Err(Error::Empty("spectrogram has no frames"));
    }
    let len = (frames - 1) * cfg.hop + n;
    let synth = cfg.window.synthesis(n);
    let plan = Fft::new(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut channels = Vec::with_capacity(spec.channels());
    let scale = 1.0 / (n as f64 * gain);
    for c in 0..spec.channels() {
        let mut out = vec![0.0f64; len];
        for t in 0..frames {
            for k in 0..spec.freq_bins() {
                let v = spec.get(c, k, t);
                let v = Complex64::new(v.re as f64, v.im as f64);
                buf[k] = v;
                if k > 0 && k < n - k {
                    buf[n - k] = v.conj();
                }
            }
            plan.inverse(&mut buf);
            let start = t * cfg.hop;
            for (i, (o, b)) in out[start..start + n].iter_mut().zip(&buf).enumerate() {
                *o += b.re * synth[i] * scale;
            }
        }
        channels.push(out);
    }
    Waveform::new(channels, spec.sample_rate())
}
