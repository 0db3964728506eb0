//! Noise power trackers (minimum statistics, MCRA) and the multichannel
//! speech-presence-probability beamformer.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::beamformer::{self, BeamWeights, DIAGONAL_LOADING};
use crate::math::{log10, logistic};
use crate::{Complex32, Complex64, Error, Mask, MultichannelSpectrogram, Result};

/// Bias compensation for the minimum of the smoothed periodogram.
pub const B_MIN: f64 = 1.66;
/// Periodogram smoothing constant used before minimum tracking.
pub const ALPHA_S: f64 = 0.85;

/// Real `[F x T]` matrix of per-bin power, frequency-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    values: Vec<f64>,
    freq_bins: usize,
    frames: usize,
}

impl PowerSpectrum {
    pub fn new(values: Vec<f64>, freq_bins: usize, frames: usize) -> Result<Self> {
        if values.len() != freq_bins * frames {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {freq_bins}x{frames} power",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::NonFinite("power must be finite and non-negative"));
        }
        Ok(PowerSpectrum { values, freq_bins, frames })
    }

    /// `|Y|^2` of one channel.
    pub fn of_channel(spec: &MultichannelSpectrogram, channel: usize) -> Result<Self> {
        spec.check_channel(channel)?;
        let mut values = Vec::with_capacity(spec.freq_bins() * spec.frames());
        for k in 0..spec.freq_bins() {
            values.extend(spec.row(channel, k).iter().map(|v| v.norm_sqr() as f64));
        }
        Ok(PowerSpectrum { values, freq_bins: spec.freq_bins(), frames: spec.frames() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.frames..(k + 1) * self.frames]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrack {
    /// Noise PSD estimate, `[F x T]`.
    pub lambda_n: Vec<f64>,
    /// Speech presence probability, `[F x T]`.
    pub p_speech: Vec<f64>,
    pub freq_bins: usize,
    pub frames: usize,
    /// Set when the requested window exceeded the number of frames.
    pub window_clamped: bool,
}

impl NoiseTrack {
    pub fn lambda(&self, k: usize, t: usize) -> f64 {
        self.lambda_n[k * self.frames + t]
    }

    pub fn presence(&self, k: usize, t: usize) -> f64 {
        self.p_speech[k * self.frames + t]
    }

    pub fn lambda_row(&self, k: usize) -> &[f64] {
        &self.lambda_n[k * self.frames..(k + 1) * self.frames]
    }
}

fn smooth(row: &[f64], alpha: f64, out: &mut Vec<f64>) {
    out.clear();
    let mut s = row.first().copied().unwrap_or(0.0);
    for &p in row {
        s = alpha * s + (1.0 - alpha) * p;
        out.push(s);
    }
}

/// Minimum of `x` over the trailing `window` samples, for every position.
fn trailing_min(x: &[f64], window: usize, out: &mut Vec<f64>) {
    out.clear();
    let mut q: VecDeque<usize> = VecDeque::new();
    for (t, &v) in x.iter().enumerate() {
        while q.back().is_some_and(|&j| x[j] >= v) {
            q.pop_back();
        }
        q.push_back(t);
        while q.front().is_some_and(|&j| j + window <= t) {
            q.pop_front();
        }
        out.push(x[q[0]]);
    }
}

fn clamp_window(window: usize, frames: usize) -> Result<(usize, bool)> {
    if window == 0 {
        return Err(Error::InvalidParameter("window must be at least one frame".into()));
    }
    if frames == 0 {
        return Err(Error::Empty("power has no frames"));
    }
    Ok((window.min(frames), window > frames))
}

/// Minimum-statistics tracker: `B_MIN` times the trailing minimum of the
/// first-order smoothed periodogram.
pub fn minima_track(power: &PowerSpectrum, window: usize) -> Result<NoiseTrack> {
    let (window, clamped) = clamp_window(window, power.frames)?;
    let mut lambda_n = Vec::with_capacity(power.values.len());
    let (mut s, mut m) = (Vec::new(), Vec::new());
    for k in 0..power.freq_bins {
        smooth(power.row(k), ALPHA_S, &mut s);
        trailing_min(&s, window, &mut m);
        lambda_n.extend(m.iter().map(|v| B_MIN * v));
    }
    Ok(NoiseTrack {
        p_speech: vec![0.0; lambda_n.len()],
        lambda_n,
        freq_bins: power.freq_bins,
        frames: power.frames,
        window_clamped: clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McraParams {
    /// Noise smoothing constant.
    pub alpha_d: f64,
    /// Ratio of smoothed power to local minimum above which speech is declared.
    pub delta: f64,
    /// Minimum search window, in frames.
    pub window: usize,
    /// Smoothing of the speech indicator.
    pub alpha_p: f64,
    /// Periodogram smoothing.
    pub alpha_s: f64,
}

impl Default for McraParams {
    fn default() -> Self {
        McraParams { alpha_d: 0.95, delta: 5.0, window: 96, alpha_p: 0.2, alpha_s: ALPHA_S }
    }
}

impl McraParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.alpha_d) || !unit(self.alpha_s) || !(0.0..1.0).contains(&self.alpha_p) {
            return Err(Error::InvalidParameter(format!(
                "smoothing constants must lie in (0, 1): alpha_d={} alpha_s={} alpha_p={}",
                self.alpha_d, self.alpha_s, self.alpha_p
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

/// Minima-controlled recursive averaging.
pub fn mcra_track(power: &PowerSpectrum, params: &McraParams) -> Result<NoiseTrack> {
    params.validate()?;
    let (window, clamped) = clamp_window(params.window, power.frames)?;
    let mut p_speech = Vec::with_capacity(power.values.len());
    let (mut s, mut m) = (Vec::new(), Vec::new());
    for k in 0..power.freq_bins {
        smooth(power.row(k), params.alpha_s, &mut s);
        trailing_min(&s, window, &mut m);
        let mut p = 0.0;
        for (sv, mv) in s.iter().zip(&m) {
            let indicator = if *sv > params.delta * mv { 1.0 } else { 0.0 };
            p = params.alpha_p * p + (1.0 - params.alpha_p) * indicator;
            p_speech.push(p);
        }
    }
    let mut track = mcra_track_with_presence(power, &p_speech, params.alpha_d)?;
    track.window_clamped = clamped;
    Ok(track)
}

/// The MCRA noise recursion driven by an externally supplied presence
/// probability: `lambda(t) = a lambda(t-1) + (1 - a) power(t)` with
/// `a = alpha_d + (1 - alpha_d) p(t)`. Starts from the first frame's power.
pub fn mcra_track_with_presence(power: &PowerSpectrum, p_speech: &[f64], alpha_d: f64) -> Result<NoiseTrack> {
    if !(alpha_d > 0.0 && alpha_d < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha_d must lie in (0, 1), got {alpha_d}")));
    }
    if p_speech.len() != power.values.len() {
        return Err(Error::ShapeMismatch("presence does not match power".into()));
    }
    if p_speech.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter("presence must lie in [0, 1]".into()));
    }
    let mut lambda_n = Vec::with_capacity(power.values.len());
    for k in 0..power.freq_bins {
        let row = power.row(k);
        let pr = &p_speech[k * power.frames..(k + 1) * power.frames];
        let mut lambda = row.first().copied().unwrap_or(0.0);
        for (&pw, &p) in row.iter().zip(pr) {
            let a = alpha_d + (1.0 - alpha_d) * p;
            lambda = a * lambda + (1.0 - a) * pw;
            lambda_n.push(lambda);
        }
    }
    Ok(NoiseTrack {
        lambda_n,
        p_speech: p_speech.to_vec(),
        freq_bins: power.freq_bins,
        frames: power.frames,
        window_clamped: false,
    })
}

/// Wiener-style gain `max(0, 1 - lambda_n / power)`; zero where the power is zero.
pub fn wiener_mask(power: &PowerSpectrum, track: &NoiseTrack) -> Result<Mask> {
    if track.freq_bins != power.freq_bins || track.frames != power.frames {
        return Err(Error::ShapeMismatch("noise track does not match power".into()));
    }
    Ok(Mask::from_fn(power.freq_bins, power.frames, |k, t| {
        let p = power.values[k * power.frames + t];
        if p > 0.0 {
            1.0 - track.lambda(k, t) / p
        } else {
            0.0
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsppParams {
    pub alpha_d: f64,
    /// Slope of the logistic presence map, per dB.
    pub slope: f64,
    /// A-posteriori SNR (dB) at which presence is 0.5.
    pub offset_db: f64,
    /// Half-width, in bins, of the frequency window the a-posteriori SNR is
    /// averaged over.
    pub freq_smoothing: usize,
    /// Frames averaged to initialize the noise covariance.
    pub init_frames: usize,
    /// Frames sharing one set of beamformer weights.
    pub block_frames: usize,
    pub ref_channel: usize,
}

impl Default for McsppParams {
    fn default() -> Self {
        McsppParams {
            alpha_d: 0.95,
            slope: 1.0,
            offset_db: 3.0,
            freq_smoothing: 2,
            init_frames: 10,
            block_frames: 16,
            ref_channel: 0,
        }
    }
}

/// Per-bin, per-frame results of the multichannel presence recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct McsppState {
    /// Speech presence probability, `[F x T]`.
    pub q: Vec<f64>,
    /// Running noise covariance after the last frame, `[F][C][C]`.
    pub noise_cov: Vec<Complex64>,
    /// Frame-averaged running noise covariance, `[F][C][C]`.
    pub mean_noise_cov: Vec<Complex64>,
    pub weights: Vec<BeamWeights>,
    pub channels: usize,
    pub freq_bins: usize,
    pub frames: usize,
}

fn hermitian_solve_quad(phi: &[Complex64], y: &[Complex64], c: usize) -> Option<f64> {
    let x = beamformer::solve(phi, y, c)?;
    let q: Complex64 = y.iter().zip(&x).map(|(a, b)| a.conj() * b).sum();
    Some(q.re.max(0.0))
}

fn loaded(phi: &[Complex64], c: usize) -> Vec<Complex64> {
    let tr: f64 = (0..c).map(|i| phi[i * c + i].re).sum();
    // The absolute term keeps an all-zero (silent) start invertible.
    let load = DIAGONAL_LOADING * tr / c as f64 + 1e-12;
    let mut out = phi.to_vec();
    for i in 0..c {
        out[i * c + i] += load;
    }
    out
}

/// Runs the presence-gated noise covariance recursion and computes one set
/// of MVDR weights per block of frames.
pub fn mcspp_track(spec: &MultichannelSpectrogram, params: &McsppParams) -> Result<McsppState> {
    let c = spec.channels();
    if c < 2 {
        return Err(Error::TooFewChannels { needed: 2, got: c });
    }
    spec.check_channel(params.ref_channel)?;
    if !(params.alpha_d > 0.0 && params.alpha_d < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha_d must lie in (0, 1), got {}", params.alpha_d)));
    }
    if params.block_frames == 0 || params.init_frames == 0 {
        return Err(Error::InvalidParameter("block and init frame counts must be positive".into()));
    }
    let (f, frames) = (spec.freq_bins(), spec.frames());
    if frames == 0 {
        return Err(Error::Empty("spectrogram has no frames"));
    }
    let block = c * c;
    let blocks = frames.div_ceil(params.block_frames);
    let mut q_all = vec![0.0; f * frames];
    let mut noise_cov = vec![Complex64::new(0.0, 0.0); f * block];
    let mut mean_noise_cov = vec![Complex64::new(0.0, 0.0); f * block];
    let mut weights: Vec<BeamWeights> =
        (0..blocks).map(|_| BeamWeights::reference(c, f, params.ref_channel)).collect();
    let mut y = vec![Complex64::new(0.0, 0.0); c];
    let init = params.init_frames.min(frames);
    for k in 0..f {
        let phi_n = &mut noise_cov[k * block..(k + 1) * block];
        for t in 0..init {
            spec.snapshot(k, t, &mut y);
            for i in 0..c {
                for j in 0..c {
                    phi_n[i * c + j] += y[i] * y[j].conj() / init as f64;
                }
            }
        }
    }
    let mut phi_s = vec![Complex64::new(0.0, 0.0); f * block];
    let mut q_sum = vec![0.0; f];
    let mut psi = vec![0.0; f];
    let half = params.freq_smoothing;
    for t in 0..frames {
        for (k, p) in psi.iter_mut().enumerate() {
            spec.snapshot(k, t, &mut y);
            let inv = loaded(&noise_cov[k * block..(k + 1) * block], c);
            *p = hermitian_solve_quad(&inv, &y, c).ok_or(Error::DegenerateCovariance { bin: k })? / c as f64;
        }
        let last_in_block = (t + 1) % params.block_frames == 0 || t + 1 == frames;
        for k in 0..f {
            let (lo, hi) = (k.saturating_sub(half), (k + half).min(f - 1));
            let local = psi[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            let q = logistic(params.slope * (10.0 * log10(local.max(1e-12)) - params.offset_db));
            q_all[k * frames + t] = q;
            let a = params.alpha_d + (1.0 - params.alpha_d) * q;
            q_sum[k] += q;
            spec.snapshot(k, t, &mut y);
            let phi_n = &mut noise_cov[k * block..(k + 1) * block];
            let s = &mut phi_s[k * block..(k + 1) * block];
            let mean = &mut mean_noise_cov[k * block..(k + 1) * block];
            for i in 0..c {
                for j in 0..c {
                    let outer = y[i] * y[j].conj();
                    phi_n[i * c + j] = phi_n[i * c + j] * a + outer * (1.0 - a);
                    s[i * c + j] += outer * q;
                    mean[i * c + j] += phi_n[i * c + j] / frames as f64;
                }
            }
            if last_in_block && q_sum[k] > 0.0 {
                let s: Vec<Complex64> = s.iter().map(|v| v / q_sum[k]).collect();
                let n = loaded(phi_n, c);
                if let Ok(w) = beamformer::mvdr_bin(&s, &n, c, params.ref_channel, k) {
                    weights[t / params.block_frames].bin_mut(k).copy_from_slice(&w);
                }
            }
        }
    }
    Ok(McsppState { q: q_all, noise_cov, mean_noise_cov, weights, channels: c, freq_bins: f, frames })
}

/// MC-SPP enhancement. A single-channel input falls back to an MCRA-driven
/// Wiener gain on that channel.
pub fn mcspp_enhance(spec: &MultichannelSpectrogram, params: &McsppParams) -> Result<MultichannelSpectrogram> {
    if spec.channels() == 1 {
        let power = PowerSpectrum::of_channel(spec, 0)?;
        let track = mcra_track(&power, &McraParams::default())?;
        let gain = wiener_mask(&power, &track)?;
        return crate::mask::apply_mask(spec, &gain, 0);
    }
    let state = mcspp_track(spec, params)?;
    mcspp_beamform(spec, &state, params.block_frames)
}

/// Applies the per-block weights of a finished [`mcspp_track`] run.
pub fn mcspp_beamform(
    spec: &MultichannelSpectrogram,
    state: &McsppState,
    block_frames: usize,
) -> Result<MultichannelSpectrogram> {
    if state.channels != spec.channels() || state.freq_bins != spec.freq_bins() || state.frames != spec.frames() {
        return Err(Error::ShapeMismatch("presence state does not match spectrogram".into()));
    }
    if block_frames == 0 || state.weights.len() != spec.frames().div_ceil(block_frames) {
        return Err(Error::InvalidParameter("block size does not match the weight blocks".into()));
    }
    let mut out = MultichannelSpectrogram::zeros(1, spec.frames(), spec.config(), spec.sample_rate());
    let mut y = vec![Complex64::new(0.0, 0.0); spec.channels()];
    for k in 0..spec.freq_bins() {
        for t in 0..spec.frames() {
            spec.snapshot(k, t, &mut y);
            let w = state.weights[t / block_frames].bin(k);
            let v: Complex64 = w.iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
            out.set(0, k, t, Complex32::new(v.re as f32, v.im as f32));
        }
    }
    Ok(out)
}
