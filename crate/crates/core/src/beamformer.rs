//! Mask-driven spatial covariance estimation and MVDR beamforming.
//!
//! The MVDR filter uses the reference-channel formulation
//! `w = (Phi_n^-1 Phi_s / tr(Phi_n^-1 Phi_s)) e_ref`, which needs no explicit
//! steering vector and is invariant to the scale of `Phi_s`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{db_to_amplitude, sqrt};
use crate::{Complex32, Complex64, Error, Mask, MultichannelSpectrogram, Result};

/// Relative diagonal loading added to every noise covariance.
pub const DIAGONAL_LOADING: f64 = 1e-6;

/// Per-frequency Hermitian speech and noise covariances, `[F][C][C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    channels: usize,
    speech: Vec<Complex64>,
    noise: Vec<Complex64>,
    /// Bins whose speech weights summed to zero (unweighted fallback used).
    pub degenerate_speech: Vec<bool>,
    /// Bins whose noise weights summed to zero (unweighted fallback used).
    pub degenerate_noise: Vec<bool>,
}

impl CovariancePair {
    /// Builds a pair from explicit matrices (row-major, one `C x C` block per bin).
    pub fn from_matrices(channels: usize, speech: Vec<Complex64>, noise: Vec<Complex64>) -> Result<Self> {
        let block = channels * channels;
        if channels == 0 || speech.len() != noise.len() || !speech.len().is_multiple_of(block) {
            return Err(Error::ShapeMismatch("covariance blocks do not match channel count".into()));
        }
        let f = speech.len() / block;
        Ok(CovariancePair {
            channels,
            speech,
            noise,
            degenerate_speech: vec![false; f],
            degenerate_noise: vec![false; f],
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn freq_bins(&self) -> usize {
        self.speech.len() / (self.channels * self.channels)
    }

    pub fn speech(&self, k: usize) -> &[Complex64] {
        let b = self.channels * self.channels;
        &self.speech[k * b..(k + 1) * b]
    }

    pub fn noise(&self, k: usize) -> &[Complex64] {
        let b = self.channels * self.channels;
        &self.noise[k * b..(k + 1) * b]
    }
}

/// Mask-weighted covariances: `Phi_s = sum m y y^H / sum m`,
/// `Phi_n = sum (1-m) y y^H / sum (1-m)` plus diagonal loading. A side
/// whose weights vanish at some bin falls back to the unweighted sample
/// covariance and is flagged.
pub fn estimate_covariances(spec: &MultichannelSpectrogram, mask: &Mask) -> Result<CovariancePair> {
    mask.check_spec(spec)?;
    let c = spec.channels();
    let f = spec.freq_bins();
    let frames = spec.frames();
    if frames == 0 {
        return Err(Error::Empty("spectrogram has no frames"));
    }
    let block = c * c;
    let mut speech = vec![Complex64::new(0.0, 0.0); f * block];
    let mut noise = vec![Complex64::new(0.0, 0.0); f * block];
    let mut degenerate_speech = vec![false; f];
    let mut degenerate_noise = vec![false; f];
    let mut y = vec![Complex64::new(0.0, 0.0); c];
    let mut raw = vec![Complex64::new(0.0, 0.0); block];
    for k in 0..f {
        let (mut ws, mut wn) = (0.0f64, 0.0f64);
        let s = &mut speech[k * block..(k + 1) * block];
        let n = &mut noise[k * block..(k + 1) * block];
        raw.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (t, &m) in mask.row(k).iter().enumerate() {
            spec.snapshot(k, t, &mut y);
            let m = m as f64;
            ws += m;
            wn += 1.0 - m;
            for i in 0..c {
                for j in 0..c {
                    let outer = y[i] * y[j].conj();
                    s[i * c + j] += outer * m;
                    n[i * c + j] += outer * (1.0 - m);
                    raw[i * c + j] += outer;
                }
            }
        }
        if ws > 0.0 {
            s.iter_mut().for_each(|v| *v /= ws);
        } else {
            degenerate_speech[k] = true;
            for (d, r) in s.iter_mut().zip(&raw) {
                *d = r / frames as f64;
            }
        }
        if wn > 0.0 {
            n.iter_mut().for_each(|v| *v /= wn);
        } else {
            degenerate_noise[k] = true;
            for (d, r) in n.iter_mut().zip(&raw) {
                *d = r / frames as f64;
            }
        }
        let load = DIAGONAL_LOADING * trace(n, c).re / c as f64;
        for i in 0..c {
            n[i * c + i] += load;
        }
    }
    Ok(CovariancePair { channels: c, speech, noise, degenerate_speech, degenerate_noise })
}

fn trace(m: &[Complex64], c: usize) -> Complex64 {
    (0..c).map(|i| m[i * c + i]).sum()
}

/// Solves `A X = B` for square `A` (`c x c`) and `B` (`c x cols`), both
/// row-major, by Gaussian elimination with partial pivoting. Returns `None`
/// for a numerically singular `A`.
pub fn solve(a: &[Complex64], b: &[Complex64], c: usize) -> Option<Vec<Complex64>> {
    let cols = b.len() / c;
    let mut a = a.to_vec();
    let mut x = b.to_vec();
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for col in 0..c {
        let pivot = (col..c).max_by(|&i, &j| a[i * c + col].norm().total_cmp(&a[j * c + col].norm()))?;
        if a[pivot * c + col].norm() <= scale * 1e-14 {
            return None;
        }
        if pivot != col {
            for j in 0..c {
                a.swap(pivot * c + j, col * c + j);
            }
            for j in 0..cols {
                x.swap(pivot * cols + j, col * cols + j);
            }
        }
        let inv = a[col * c + col].inv();
        for row in col + 1..c {
            let factor = a[row * c + col] * inv;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in col..c {
                let v = a[col * c + j];
                a[row * c + j] -= factor * v;
            }
            for j in 0..cols {
                let v = x[col * cols + j];
                x[row * cols + j] -= factor * v;
            }
        }
    }
    for col in (0..c).rev() {
        let inv = a[col * c + col].inv();
        for j in 0..cols {
            let mut v = x[col * cols + j];
            for k in col + 1..c {
                v -= a[col * c + k] * x[k * cols + j];
            }
            x[col * cols + j] = v * inv;
        }
    }
    Some(x)
}

/// MVDR weights for one frequency bin.
pub fn mvdr_bin(phi_s: &[Complex64], phi_n: &[Complex64], c: usize, ref_channel: usize, bin: usize) -> Result<Vec<Complex64>> {
    let x = solve(phi_n, phi_s, c).ok_or(Error::DegenerateCovariance { bin })?;
    let tr = trace(&x, c);
    if !(tr.re.is_finite() && tr.im.is_finite()) || tr.norm() <= f64::MIN_POSITIVE {
        return Err(Error::DegenerateCovariance { bin });
    }
    let w: Vec<Complex64> = (0..c).map(|i| x[i * c + ref_channel] / tr).collect();
    if w.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::DegenerateCovariance { bin });
    }
    Ok(w)
}

/// Beamformer weights, `[F][C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeights {
    channels: usize,
    values: Vec<Complex64>,
}

impl BeamWeights {
    pub fn new(channels: usize, values: Vec<Complex64>) -> Result<Self> {
        if channels == 0 || !values.len().is_multiple_of(channels) {
            return Err(Error::ShapeMismatch("weight count is not a multiple of channels".into()));
        }
        Ok(BeamWeights { channels, values })
    }

    /// Selects `ref_channel` at every bin.
    pub fn reference(channels: usize, freq_bins: usize, ref_channel: usize) -> Self {
        let mut values = vec![Complex64::new(0.0, 0.0); channels * freq_bins];
        for k in 0..freq_bins {
            values[k * channels + ref_channel] = Complex64::new(1.0, 0.0);
        }
        BeamWeights { channels, values }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn freq_bins(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn bin(&self, k: usize) -> &[Complex64] {
        &self.values[k * self.channels..(k + 1) * self.channels]
    }

    pub fn bin_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.values[k * self.channels..(k + 1) * self.channels]
    }
}

/// MVDR weights at every bin; fails on the first degenerate bin.
pub fn mvdr_weights(cov: &CovariancePair, ref_channel: usize) -> Result<BeamWeights> {
    let c = cov.channels();
    if ref_channel >= c {
        return Err(Error::ChannelOutOfRange { channel: ref_channel, channels: c });
    }
    let mut values = Vec::with_capacity(c * cov.freq_bins());
    for k in 0..cov.freq_bins() {
        values.extend(mvdr_bin(cov.speech(k), cov.noise(k), c, ref_channel, k)?);
    }
    BeamWeights::new(c, values)
}

/// Like [`mvdr_weights`], but degenerate bins pass the reference channel
/// through. Returns the weights and the indices of the bins that fell back.
pub fn mvdr_weights_or_reference(cov: &CovariancePair, ref_channel: usize) -> Result<(BeamWeights, Vec<usize>)> {
    let c = cov.channels();
    if ref_channel >= c {
        return Err(Error::ChannelOutOfRange { channel: ref_channel, channels: c });
    }
    let mut w = BeamWeights::reference(c, cov.freq_bins(), ref_channel);
    let mut fallback = Vec::new();
    for k in 0..cov.freq_bins() {
        match mvdr_bin(cov.speech(k), cov.noise(k), c, ref_channel, k) {
            Ok(v) => w.bin_mut(k).copy_from_slice(&v),
            Err(Error::DegenerateCovariance { .. }) => fallback.push(k),
            Err(e) => return Err(e),
        }
    }
    Ok((w, fallback))
}

/// `out(k, t) = w(k)^H y(k, t)`.
pub fn apply_beamformer(spec: &MultichannelSpectrogram, w: &BeamWeights) -> Result<MultichannelSpectrogram> {
    if w.channels() != spec.channels() || w.freq_bins() != spec.freq_bins() {
        return Err(Error::ShapeMismatch(format!(
            "weights {}x{} vs spectrogram {}x{}",
            w.freq_bins(),
            w.channels(),
            spec.freq_bins(),
            spec.channels()
        )));
    }
    let mut out = MultichannelSpectrogram::zeros(1, spec.frames(), spec.config(), spec.sample_rate());
    let mut y = vec![Complex64::new(0.0, 0.0); spec.channels()];
    for k in 0..spec.freq_bins() {
        let wk = w.bin(k);
        for t in 0..spec.frames() {
            spec.snapshot(k, t, &mut y);
            let v: Complex64 = wk.iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
            out.set(0, k, t, Complex32::new(v.re as f32, v.im as f32));
        }
    }
    Ok(out)
}

/// Applies `gain = max(m, 10^(-max_suppression_db / 20))` to a
/// single-channel spectrogram. `f64::INFINITY` disables the floor.
pub fn apply_postfilter(
    spec: &MultichannelSpectrogram,
    m: &Mask,
    max_suppression_db: f64,
) -> Result<MultichannelSpectrogram> {
    if !(max_suppression_db >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "maximum suppression must be non-negative, got {max_suppression_db}"
        )));
    }
    if spec.channels() != 1 {
        return Err(Error::ShapeMismatch("postfilter expects a single-channel spectrogram".into()));
    }
    m.check_spec(spec)?;
    let floor = db_to_amplitude(-max_suppression_db) as f32;
    let mut out = spec.clone();
    for k in 0..spec.freq_bins() {
        for (v, &g) in out.row_mut(0, k).iter_mut().zip(m.row(k)) {
            *v *= g.max(floor);
        }
    }
    Ok(out)
}

/// Dominant eigenvector of a Hermitian PSD matrix by power iteration,
/// normalized to unit length.
pub fn principal_eigenvector(m: &[Complex64], c: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(1.0, 0.0); c];
    for it in 0..500 {
        let mut next: Vec<Complex64> = (0..c)
            .map(|i| (0..c).map(|j| m[i * c + j] * v[j]).sum())
            .collect();
        let norm = sqrt(next.iter().map(|x| x.norm_sqr()).sum());
        if norm == 0.0 {
            return v;
        }
        next.iter_mut().for_each(|x| *x /= norm);
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).norm_sqr()).sum();
        v = next;
        if it > 10 && delta < 1e-24 {
            break;
        }
    }
    v
}
