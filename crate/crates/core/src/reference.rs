//! Supervised reference construction from a close-talking microphone.
//!
//! The close mic only decides *where* speech is active (per frequency band);
//! the reference signal itself is an MVDR beamformer output over the array,
//! so close-mic coloration and leakage never reach the target.

use alloc::vec;
use alloc::vec::Vec;

use crate::beamformer::{apply_beamformer, apply_postfilter, estimate_covariances, mvdr_weights_or_reference};
use crate::fft::Fft;
use crate::scene::delay_signal;
use crate::signal::istft;
use crate::{Complex64, Error, Mask, MultichannelSpectrogram, Result, Waveform};

pub const ADAPTATION_PERCENTILE: f64 = 85.0;
pub const POSTFILTER_PERCENTILE: f64 = 75.0;
pub const MAX_SUPPRESSION_DB: f64 = 15.0;

/// Percentile of `sorted` with linear interpolation between order statistics.
fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Binary mask: 1 where the channel-0 energy `|X|^2` strictly exceeds the
/// `percentile`-th percentile of its frequency band over all frames.
pub fn percentile_vad(close: &MultichannelSpectrogram, percentile: f64) -> Result<Mask> {
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::InvalidParameter(alloc::format!(
            "percentile must lie in [0, 100], got {percentile}"
        )));
    }
    if close.frames() == 0 || close.freq_bins() == 0 {
        return Err(Error::Empty("close-mic spectrogram"));
    }
    let (f, frames) = (close.freq_bins(), close.frames());
    let mut values = vec![0.0f32; f * frames];
    let mut energy = Vec::with_capacity(frames);
    let mut sorted = Vec::with_capacity(frames);
    for k in 0..f {
        energy.clear();
        energy.extend(close.row(0, k).iter().map(|v| {
            let (re, im) = (v.re as f64, v.im as f64);
            re * re + im * im
        }));
        sorted.clear();
        sorted.extend_from_slice(&energy);
        sorted.sort_by(f64::total_cmp);
        let th = percentile_sorted(&sorted, percentile);
        for (t, &e) in energy.iter().enumerate() {
            if e > th {
                values[k * frames + t] = 1.0;
            }
        }
    }
    Mask::new(values, f, frames)
}

/// Output of [`build_reference`].
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub waveform: Waveform,
    /// Single-channel spectrogram of the reference.
    pub spectrogram: MultichannelSpectrogram,
    pub adaptation_mask: Mask,
    pub postfilter_mask: Mask,
    /// Bins where the beamformer fell back to the reference channel.
    pub fallback_bins: Vec<usize>,
}

/// Close-mic-gated MVDR reference on array channel `ref_channel`.
pub fn build_reference(
    array: &MultichannelSpectrogram,
    close: &MultichannelSpectrogram,
    ref_channel: usize,
) -> Result<Reference> {
    if array.frames() != close.frames() || array.freq_bins() != close.freq_bins() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "array has {}x{} bins x frames, close mic {}x{}",
            array.freq_bins(),
            array.frames(),
            close.freq_bins(),
            close.frames()
        )));
    }
    array.check_channel(ref_channel)?;
    let adaptation_mask = percentile_vad(close, ADAPTATION_PERCENTILE)?;
    let postfilter_mask = percentile_vad(close, POSTFILTER_PERCENTILE)?;
    let cov = estimate_covariances(array, &adaptation_mask)?;
    if cov.degenerate_speech.iter().all(|&d| d) {
        return Err(Error::DegenerateCovariance { bin: 0 });
    }
    let (mut w, mut fallback_bins) = mvdr_weights_or_reference(&cov, ref_channel)?;
    for (k, _) in cov.degenerate_speech.iter().enumerate().filter(|(_, &d)| d) {
        if !fallback_bins.contains(&k) {
            w.bin_mut(k).iter_mut().enumerate().for_each(|(c, v)| {
                *v = Complex64::new(if c == ref_channel { 1.0 } else { 0.0 }, 0.0)
            });
            fallback_bins.push(k);
        }
    }
    fallback_bins.sort_unstable();
    let beam = apply_beamformer(array, &w)?;
    let spectrogram = apply_postfilter(&beam, &postfilter_mask, MAX_SUPPRESSION_DB)?;
    let waveform = istft(&spectrogram)?;
    Ok(Reference { waveform, spectrogram, adaptation_mask, postfilter_mask, fallback_bins })
}

/// Integer lag in `[-max_lag, max_lag]` maximizing the cross-correlation
/// `sum target[n] x[n - lag]`.
pub fn best_lag(target: &[f64], x: &[f64], max_lag: usize) -> i64 {
    let n = target.len().max(x.len());
    let len = (2 * n).next_power_of_two().max(2);
    let fft = Fft::new(len);
    let load = |s: &[f64]| {
        let mut v = vec![Complex64::new(0.0, 0.0); len];
        for (d, &x) in v.iter_mut().zip(s) {
            *d = Complex64::new(x, 0.0);
        }
        v
    };
    let (mut a, mut b) = (load(target), load(x));
    fft.forward(&mut a);
    fft.forward(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q.conj();
    }
    fft.inverse(&mut a);
    let max_lag = max_lag.min(n.saturating_sub(1)) as i64;
    let mut best = (0i64, f64::NEG_INFINITY);
    for lag in -max_lag..=max_lag {
        let idx = lag.rem_euclid(len as i64) as usize;
        let v = a[idx].re;
        if v > best.1 || (v == best.1 && lag.abs() < best.0.abs()) {
            best = (lag, v);
        }
    }
    best.0
}

/// Shifts the close-mic signal by the integer lag that best aligns it with
/// `target` and returns it with the lag.
pub fn align_close_mic(target: &[f64], close: &[f64], max_lag: usize) -> (Vec<f64>, i64) {
    let lag = best_lag(target, close, max_lag);
    let mut out = delay_signal(close, lag as f64);
    out.resize(target.len(), 0.0);
    (out, lag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sin;
    use crate::{Complex32, StftConfig};

    fn energies(rows: &[Vec<f64>]) -> MultichannelSpectrogram {
        let frames = rows[0].len();
        let cfg = StftConfig::new(2 * (rows.len() - 1), rows.len() - 1);
        let mut s = MultichannelSpectrogram::zeros(1, frames, cfg, 16000);
        for (k, r) in rows.iter().enumerate() {
            for (t, &e) in r.iter().enumerate() {
                s.set(0, k, t, Complex32::new(crate::math::sqrt(e) as f32, 0.0));
            }
        }
        s
    }

    #[test]
    fn constant_band_has_no_activity() {
        let s = energies(&[vec![2.0; 50], vec![0.5; 50]]);
        let m = percentile_vad(&s, 85.0).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn order_statistics() {
        let row: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 + 1.0).collect();
        let s = energies(&[row.clone(), row.iter().rev().copied().collect()]);
        let m = percentile_vad(&s, 85.0).unwrap();
        for k in 0..2 {
            assert_eq!(m.row(k).iter().filter(|&&v| v == 1.0).count(), 15);
        }
        let m0 = percentile_vad(&s, 0.0).unwrap();
        for k in 0..2 {
            assert_eq!(m0.row(k).iter().filter(|&&v| v == 1.0).count(), 99);
        }
        let min_at = row.iter().position(|&v| v == 1.0).unwrap();
        assert_eq!(m0.get(0, min_at), 0.0);
        assert!(percentile_vad(&s, 101.0).is_err());
    }

    #[test]
    fn interpolated_percentile() {
        assert_eq!(percentile_sorted(&[1.0, 2.0, 3.0, 4.0, 5.0], 50.0), 3.0);
        assert!((percentile_sorted(&[0.0, 10.0], 85.0) - 8.5).abs() < 1e-12);
        assert_eq!(percentile_sorted(&[7.0], 85.0), 7.0);
    }

    #[test]
    fn zero_close_mic_is_degenerate() {
        let array = energies(&[vec![1.0; 10], vec![2.0; 10]]);
        let close = energies(&[vec![0.0; 10], vec![0.0; 10]]);
        assert!(matches!(build_reference(&array, &close, 0), Err(Error::DegenerateCovariance { .. })));
    }

    #[test]
    fn misaligned_spectrograms_are_rejected() {
        let a = energies(&[vec![1.0; 10], vec![2.0; 10]]);
        let b = energies(&[vec![1.0; 9], vec![2.0; 9]]);
        assert!(matches!(build_reference(&a, &b, 0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn lag_recovery() {
        let x: Vec<f64> = (0..2000).map(|i| sin(i as f64 * 0.13) * sin(i as f64 * 0.0071) + sin(i as f64 * 0.9)).collect();
        for lag in [-37i64, 0, 5, 120] {
            let target = delay_signal(&x, lag as f64);
            assert_eq!(best_lag(&target, &x, 200), lag);
            let (aligned, l) = align_close_mic(&target, &x, 200);
            assert_eq!(l, lag);
            assert_eq!(aligned.len(), target.len());
        }
    }
}
