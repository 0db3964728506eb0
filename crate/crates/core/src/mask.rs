//! Time-frequency masks: oracle targets and mask algebra.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::math::cos;
use crate::{Complex32, Error, MultichannelSpectrogram, Result};

/// Real mask in `[0, 1]`, stored frequency-major (`values[k * frames + t]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    values: Vec<f32>,
    freq_bins: usize,
    frames: usize,
}

impl Mask {
    pub fn new(values: Vec<f32>, freq_bins: usize, frames: usize) -> Result<Self> {
        if values.len() != freq_bins * frames {
            return Err(Error::ShapeMismatch(format!(
                "{} mask values for {freq_bins}x{frames}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("mask value {v} outside [0, 1]")));
        }
        Ok(Mask { values, freq_bins, frames })
    }

    pub fn filled(freq_bins: usize, frames: usize, value: f32) -> Self {
        assert!((0.0..=1.0).contains(&value), "mask value outside [0, 1]");
        Mask { values: vec![value; freq_bins * frames], freq_bins, frames }
    }

    /// Builds a mask from an arbitrary map, clamping into `[0, 1]` (NaN -> 0).
    pub fn from_fn(freq_bins: usize, frames: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(freq_bins * frames);
        for k in 0..freq_bins {
            for t in 0..frames {
                values.push(clamp_unit(f(k, t)) as f32);
            }
        }
        Mask { values, freq_bins, frames }
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, k: usize, t: usize) -> f32 {
        self.values[k * self.frames + t]
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.values[k * self.frames..(k + 1) * self.frames]
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.freq_bins == other.freq_bins && self.frames == other.frames
    }

    pub fn matches(&self, spec: &MultichannelSpectrogram) -> bool {
        self.freq_bins == spec.freq_bins() && self.frames == spec.frames()
    }

    pub(crate) fn check_spec(&self, spec: &MultichannelSpectrogram) -> Result<()> {
        if self.matches(spec) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "mask {}x{} vs spectrogram {}x{}",
                self.freq_bins,
                self.frames,
                spec.freq_bins(),
                spec.frames()
            )))
        }
    }

    fn check_same(&self, other: &Mask) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "mask {}x{} vs {}x{}",
                self.freq_bins, self.frames, other.freq_bins, other.frames
            )))
        }
    }
}

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

fn check_pair(
    clean: &MultichannelSpectrogram,
    noisy: &MultichannelSpectrogram,
    channel: usize,
) -> Result<()> {
    if clean.freq_bins() != noisy.freq_bins() || clean.frames() != noisy.frames() {
        return Err(Error::ShapeMismatch(format!(
            "clean {}x{} vs noisy {}x{}",
            clean.freq_bins(),
            clean.frames(),
            noisy.freq_bins(),
            noisy.frames()
        )));
    }
    clean.check_channel(channel)?;
    noisy.check_channel(channel)
}

fn abs64(v: Complex32) -> f64 {
    let (re, im) = (v.re as f64, v.im as f64);
    crate::math::sqrt(re * re + im * im)
}

/// `clamp(|s| / |y|, 0, 1)`, with 0 wherever `|y| = 0`.
pub fn ideal_amplitude_mask(
    clean: &MultichannelSpectrogram,
    noisy: &MultichannelSpectrogram,
    channel: usize,
) -> Result<Mask> {
    check_pair(clean, noisy, channel)?;
    Ok(Mask::from_fn(noisy.freq_bins(), noisy.frames(), |k, t| {
        let y = abs64(noisy.get(channel, k, t));
        if y == 0.0 {
            0.0
        } else {
            abs64(clean.get(channel, k, t)) / y
        }
    }))
}

/// `clamp(cos(phase_s - phase_y) |s| / |y|, 0, 1)`, with 0 wherever `|y| = 0`.
pub fn phase_sensitive_mask(
    clean: &MultichannelSpectrogram,
    noisy: &MultichannelSpectrogram,
    channel: usize,
) -> Result<Mask> {
    check_pair(clean, noisy, channel)?;
    Ok(Mask::from_fn(noisy.freq_bins(), noisy.frames(), |k, t| {
        let y = noisy.get(channel, k, t);
        let s = clean.get(channel, k, t);
        let ya = abs64(y);
        if ya == 0.0 {
            return 0.0;
        }
        let dphi = crate::math::atan2(s.im as f64, s.re as f64)
            - crate::math::atan2(y.im as f64, y.re as f64);
        cos(dphi) * abs64(s) / ya
    }))
}

/// Pointwise mean of the given masks.
pub fn average_channel_masks(masks: &[Mask]) -> Result<Mask> {
    let first = masks.first().ok_or(Error::Empty("mask list"))?;
    for m in &masks[1..] {
        first.check_same(m)?;
    }
    let n = masks.len() as f64;
    let values = (0..first.values.len())
        .map(|i| {
            let s: f64 = masks.iter().map(|m| m.values[i] as f64).sum();
            (s / n).clamp(0.0, 1.0) as f32
        })
        .collect();
    Ok(Mask { values, ..*first })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMode {
    Average,
    Max,
    Min,
}

impl CombineMode {
    pub fn name(self) -> &'static str {
        match self {
            CombineMode::Average => "avg",
            CombineMode::Max => "max",
            CombineMode::Min => "min",
        }
    }
}

impl FromStr for CombineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" | "average" | "mean" => Ok(CombineMode::Average),
            "max" | "maximum" => Ok(CombineMode::Max),
            "min" | "minimum" => Ok(CombineMode::Min),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

/// Pointwise fusion of two masks.
pub fn combine(a: &Mask, b: &Mask, mode: CombineMode) -> Result<Mask> {
    a.check_same(b)?;
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| match mode {
            // (x + y) * 0.5 is exact for x == y, which keeps combine(a, a) == a.
            CombineMode::Average => (x + y) * 0.5,
            CombineMode::Max => x.max(y),
            CombineMode::Min => x.min(y),
        })
        .collect();
    Ok(Mask { values, ..*a })
}

/// Multiplies one channel of `spec` by the mask, returning a single-channel
/// spectrogram.
pub fn apply_mask(
    spec: &MultichannelSpectrogram,
    m: &Mask,
    channel: usize,
) -> Result<MultichannelSpectrogram> {
    m.check_spec(spec)?;
    let mut out = spec.channel(channel)?;
    for k in 0..m.freq_bins {
        for (v, &g) in out.row_mut(0, k).iter_mut().zip(m.row(k)) {
            *v = Complex32::new(v.re * g, v.im * g);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{sin, PI};
    use crate::StftConfig;
    use proptest::prelude::*;

    fn spec_from(vals: &[(f32, f32)], frames: usize) -> MultichannelSpectrogram {
        let cfg = StftConfig::new(2 * (vals.len() / frames - 1), 1);
        let v = vals.iter().map(|&(r, i)| Complex32::new(r, i)).collect();
        MultichannelSpectrogram::from_values(v, 1, frames, cfg, 16000).unwrap()
    }

    fn pseudo(n: usize, seed: u32) -> Vec<(f32, f32)> {
        (0..n)
            .map(|i| {
                let a = (i as f64 + 1.0) * (seed as f64 + 0.7);
                ((sin(a * 1.3) * 2.0) as f32, (sin(a * 0.71 + 0.4)) as f32)
            })
            .collect()
    }

    #[test]
    fn iam_of_identical_is_one() {
        let s = spec_from(&pseudo(12, 1), 4);
        let m = ideal_amplitude_mask(&s, &s, 0).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn iam_of_zero_clean_is_zero() {
        let y = spec_from(&pseudo(12, 1), 4);
        let s = spec_from(&[(0.0, 0.0); 12], 4);
        let m = ideal_amplitude_mask(&s, &y, 0).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn iam_clamps_and_guards_zero_noisy() {
        let y = spec_from(&[(1.0, 0.0), (0.0, 0.0), (1.0, 1.0), (2.0, 0.0)], 2);
        let s = spec_from(&[(2.0, 0.0), (3.0, 0.0), (0.5, 0.5), (1.0, 0.0)], 2);
        let m = ideal_amplitude_mask(&s, &y, 0).unwrap();
        assert_eq!(m.values(), &[1.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn psm_phase_cases() {
        let y = spec_from(&[(1.0, 0.0), (1.0, 0.0)], 1);
        let c = (PI / 3.0).cos() as f32;
        let sn = (PI / 3.0).sin() as f32;
        let s = spec_from(&[(-1.0, 0.0), (c, sn)], 1);
        let m = phase_sensitive_mask(&s, &y, 0).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
        assert!((m.get(1, 0) - 0.5).abs() < 1e-6);
        let same = phase_sensitive_mask(&y, &y, 0).unwrap();
        assert!(same.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = spec_from(&pseudo(12, 1), 4);
        let b = spec_from(&pseudo(12, 1), 3);
        assert!(matches!(ideal_amplitude_mask(&a, &b, 0), Err(Error::ShapeMismatch(_))));
        assert!(combine(&Mask::filled(2, 2, 0.1), &Mask::filled(2, 3, 0.1), CombineMode::Max).is_err());
    }

    #[test]
    fn channel_average() {
        let m = Mask::new(vec![0.1, 0.4, 0.9, 0.0], 2, 2).unwrap();
        let six = vec![m.clone(); 6];
        let avg = average_channel_masks(&six).unwrap();
        for (a, b) in avg.values().iter().zip(m.values()) {
            assert!((a - b).abs() < 1e-7);
        }
        let pair = [Mask::filled(1, 1, 0.2), Mask::filled(1, 1, 0.8)];
        assert!((average_channel_masks(&pair).unwrap().get(0, 0) - 0.5).abs() < 1e-7);
        assert!(matches!(average_channel_masks(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn combine_modes() {
        let a = Mask::filled(1, 1, 0.3);
        let b = Mask::filled(1, 1, 0.7);
        assert!((combine(&a, &b, CombineMode::Average).unwrap().get(0, 0) - 0.5).abs() < 1e-7);
        assert_eq!(combine(&a, &b, CombineMode::Max).unwrap().get(0, 0), 0.7);
        assert_eq!(combine(&a, &b, CombineMode::Min).unwrap().get(0, 0), 0.3);
        assert!(matches!("median".parse::<CombineMode>(), Err(Error::UnknownMode(_))));
        assert_eq!("avg".parse::<CombineMode>().unwrap(), CombineMode::Average);
    }

    #[test]
    fn apply_trivial_masks() {
        let s = spec_from(&pseudo(12, 2), 4);
        let ones = apply_mask(&s, &Mask::filled(3, 4, 1.0), 0).unwrap();
        assert_eq!(ones, s);
        let zeros = apply_mask(&s, &Mask::filled(3, 4, 0.0), 0).unwrap();
        assert!(zeros.values().iter().all(|v| v.norm() == 0.0));
    }

    fn arb_mask(fb: usize, fr: usize) -> impl Strategy<Value = Mask> {
        proptest::collection::vec(0.0f32..=1.0, fb * fr)
            .prop_map(move |v| Mask::new(v, fb, fr).unwrap())
    }

    proptest! {
        #[test]
        fn combine_is_ordered_and_idempotent(a in arb_mask(3, 5), b in arb_mask(3, 5)) {
            let lo = combine(&a, &b, CombineMode::Min).unwrap();
            let mid = combine(&a, &b, CombineMode::Average).unwrap();
            let hi = combine(&a, &b, CombineMode::Max).unwrap();
            for i in 0..15 {
                prop_assert!(lo.values()[i] <= mid.values()[i] && mid.values()[i] <= hi.values()[i]);
            }
            for mode in [CombineMode::Average, CombineMode::Max, CombineMode::Min] {
                prop_assert_eq!(&combine(&a, &a, mode).unwrap(), &a);
            }
        }

        #[test]
        fn iam_then_apply_gives_min_magnitude(
            y in proptest::collection::vec((-5.0f32..5.0, -5.0f32..5.0), 12),
            s in proptest::collection::vec((-5.0f32..5.0, -5.0f32..5.0), 12),
        ) {
            let ys = spec_from(&y, 3);
            let ss = spec_from(&s, 3);
            let m = ideal_amplitude_mask(&ss, &ys, 0).unwrap();
            let out = apply_mask(&ys, &m, 0).unwrap();
            for k in 0..ys.freq_bins() {
                for t in 0..3 {
                    let ya = ys.get(0, k, t).norm();
                    let expected = if ya == 0.0 { 0.0 } else { ss.get(0, k, t).norm().min(ya) };
                    let got = out.get(0, k, t).norm();
                    prop_assert!((got - expected).abs() <= 1e-5 * (1.0 + expected));
                    prop_assert!(got <= ya * (1.0 + 1e-6));
                }
            }
        }

        #[test]
        fn oracle_masks_stay_in_unit_interval(
            y in proptest::collection::vec((-1e30f32..1e30, -1e30f32..1e30), 12),
            s in proptest::collection::vec((-1e30f32..1e30, -1e30f32..1e30), 12),
            zero_mask in proptest::collection::vec(any::<bool>(), 12),
        ) {
            let y: Vec<_> = y.iter().zip(&zero_mask).map(|(&v, &z)| if z { (0.0, 0.0) } else { v }).collect();
            let ys = spec_from(&y, 4);
            let ss = spec_from(&s, 4);
            for m in [ideal_amplitude_mask(&ss, &ys, 0).unwrap(), phase_sensitive_mask(&ss, &ys, 0).unwrap()] {
                prop_assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
