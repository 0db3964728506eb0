//! Synthetic multichannel scenes with known clean speech, delays and noise.
//!
//! The "speech" is a deterministic harmonic source with syllable-like
//! envelopes, formant shaping, gliding pitch, unvoiced bursts and pauses,
//! which gives the sparse time-frequency structure that mask-based methods
//! depend on.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{cos, floor, ln, log10, sin, sqrt, PI, TWO_PI};
use crate::{Error, Result, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Independent white Gaussian noise per channel.
    White,
    /// Independent per-channel noise shaped to a common low-pass spectrum.
    Diffuse,
    /// Sum of 8 amplitude-modulated band-pass noise streams per channel.
    Babble,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Diffuse => "diffuse",
            NoiseKind::Babble => "babble",
        }
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "diffuse" => Ok(NoiseKind::Diffuse),
            "babble" | "babble-like" => Ok(NoiseKind::Babble),
            other => Err(Error::InvalidParameter(format!("unknown noise kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub seed: u64,
    pub channels: usize,
    /// Per-channel delay of the speech image, in samples.
    pub delays: Vec<f64>,
    /// Speech-image to noise energy ratio over all channels; `+inf` for no noise.
    pub snr_db: f64,
    pub duration_s: f64,
    pub noise_kind: NoiseKind,
    pub sample_rate: u32,
    pub tau_max: f64,
}

impl SceneConfig {
    /// Default geometry: channel 0 undelayed, the others drawn from `[-6, 6]`
    /// samples by the seed.
    pub fn new(seed: u64, channels: usize, snr_db: f64, duration_s: f64, noise_kind: NoiseKind) -> Self {
        SceneConfig {
            seed,
            channels,
            delays: default_delays(seed, channels),
            snr_db,
            duration_s,
            noise_kind,
            sample_rate: 16000,
            tau_max: 16.0,
        }
    }
}

pub fn default_delays(seed: u64, channels: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6465_6c61_7973);
    (0..channels)
        .map(|c| if c == 0 { 0.0 } else { -6.0 + 12.0 * uniform(&mut rng) })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Dry source signal.
    pub clean: Waveform,
    /// Delayed source image at every channel.
    pub images: Waveform,
    /// Scaled noise at every channel.
    pub noise: Waveform,
    /// `images + noise`.
    pub noisy: Waveform,
    /// Per-sample source activity.
    pub active: Vec<bool>,
    pub delays: Vec<f64>,
    pub snr_db: f64,
    pub noise_kind: NoiseKind,
}

impl Scene {
    /// Energy ratio of images to noise over all channels, in dB.
    pub fn measured_snr_db(&self) -> f64 {
        let es: f64 = self.images.channels().iter().flatten().map(|v| v * v).sum();
        let en: f64 = self.noise.channels().iter().flatten().map(|v| v * v).sum();
        10.0 * log10(es / en)
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    sqrt(-2.0 * ln(u1)) * cos(TWO_PI * u2)
}

pub fn synth_scene(cfg: &SceneConfig) -> Result<Scene> {
    if !(cfg.duration_s >= 1.0) {
        return Err(Error::InvalidParameter(format!("duration {} s is below 1 s", cfg.duration_s)));
    }
    if cfg.channels == 0 || cfg.delays.len() != cfg.channels {
        return Err(Error::InvalidParameter(format!(
            "{} delays for {} channels",
            cfg.delays.len(),
            cfg.channels
        )));
    }
    if let Some(d) = cfg.delays.iter().find(|d| !(d.abs() <= cfg.tau_max)) {
        return Err(Error::InvalidParameter(format!("delay {d} exceeds tau_max {}", cfg.tau_max)));
    }
    if cfg.snr_db.is_nan() || cfg.snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter("snr must be a number or +inf".into()));
    }
    if cfg.sample_rate == 0 {
        return Err(Error::InvalidParameter("sample rate must be positive".into()));
    }
    let sr = cfg.sample_rate as f64;
    let n = (cfg.duration_s * sr) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let (mut clean, active) = speech_like(&mut rng, n, sr);
    let peak = clean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        clean.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    let mut images: Vec<Vec<f64>> = cfg.delays.iter().map(|&d| delay_signal(&clean, d)).collect();

    let mut noise: Vec<Vec<f64>> = (0..cfg.channels)
        .map(|_| match cfg.noise_kind {
            NoiseKind::White => (0..n).map(|_| gaussian(&mut rng)).collect(),
            NoiseKind::Diffuse => shaped_noise(&mut rng, n),
            NoiseKind::Babble => Vec::new(),
        })
        .collect();
    if cfg.noise_kind == NoiseKind::Babble {
        noise = babble(&mut rng, n, cfg.channels, sr);
    }

    let es: f64 = images.iter().flatten().map(|v| v * v).sum();
    let en: f64 = noise.iter().flatten().map(|v| v * v).sum();
    let gain = if cfg.snr_db == f64::INFINITY || en == 0.0 {
        0.0
    } else {
        sqrt(es / (en * crate::math::powf(10.0, cfg.snr_db / 10.0)))
    };
    noise.iter_mut().flatten().for_each(|v| *v *= gain);

    let peak = images
        .iter()
        .zip(&noise)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + y).abs()))
        .fold(0.0f64, f64::max);
    if peak > 0.95 {
        let s = 0.95 / peak;
        clean.iter_mut().for_each(|v| *v *= s);
        images.iter_mut().flatten().for_each(|v| *v *= s);
        noise.iter_mut().flatten().for_each(|v| *v *= s);
    }
    let noisy: Vec<Vec<f64>> = images
        .iter()
        .zip(&noise)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();

    Ok(Scene {
        clean: Waveform::mono(clean, cfg.sample_rate)?,
        images: Waveform::new(images, cfg.sample_rate)?,
        noise: Waveform::new(noise, cfg.sample_rate)?,
        noisy: Waveform::new(noisy, cfg.sample_rate)?,
        active,
        delays: cfg.delays.clone(),
        snr_db: cfg.snr_db,
        noise_kind: cfg.noise_kind,
    })
}

/// Formant resonance curve evaluated at `f` Hz.
fn formant_gain(f: f64, formants: &[(f64, f64, f64); 3]) -> f64 {
    formants
        .iter()
        .map(|&(fc, bw, amp)| {
            let x = (f - fc) / bw;
            amp / (1.0 + x * x)
        })
        .sum::<f64>()
        + 0.02
}

fn speech_like(rng: &mut ChaCha8Rng, n: usize, sr: f64) -> (Vec<f64>, Vec<bool>) {
    let mut out = vec![0.0; n];
    let mut active = vec![false; n];
    let mut pos = (range(rng, 0.1, 0.3) * sr) as usize;
    let ramp = (0.02 * sr) as usize;
    while pos < n {
        let len = ((range(rng, 0.12, 0.35) * sr) as usize).min(n - pos);
        let voiced = uniform(rng) < 0.8;
        let level = range(rng, 0.5, 1.0);
        let env = |i: usize| -> f64 {
            let a = if i < ramp { sin(0.5 * PI * i as f64 / ramp as f64) } else { 1.0 };
            let j = len - 1 - i;
            let d = if j < ramp { sin(0.5 * PI * j as f64 / ramp as f64) } else { 1.0 };
            level * a * a * d * d
        };
        if voiced {
            let f0_start = range(rng, 90.0, 230.0);
            let f0_end = f0_start * range(rng, 0.8, 1.2);
            let formants = [
                (range(rng, 300.0, 850.0), 90.0, 1.0),
                (range(rng, 850.0, 2300.0), 130.0, 0.6),
                (range(rng, 2300.0, 3300.0), 200.0, 0.35),
            ];
            let max_f0 = f0_start.max(f0_end);
            let harmonics = (0.45 * sr / max_f0) as usize;
            let mut phases: Vec<f64> = (0..harmonics).map(|_| range(rng, 0.0, TWO_PI)).collect();
            for i in 0..len {
                let f0 = f0_start + (f0_end - f0_start) * i as f64 / len as f64;
                let e = env(i);
                let mut acc = 0.0;
                for (h, ph) in phases.iter_mut().enumerate() {
                    let fh = (h + 1) as f64 * f0;
                    acc += formant_gain(fh, &formants) / sqrt((h + 1) as f64) * sin(*ph);
                    *ph += TWO_PI * fh / sr;
                    if *ph > TWO_PI {
                        *ph -= TWO_PI;
                    }
                }
                out[pos + i] = e * acc;
                active[pos + i] = true;
            }
        } else {
            let mut prev = 0.0;
            for i in 0..len {
                let w = gaussian(rng);
                // First difference tilts the burst towards high frequencies.
                out[pos + i] = 0.25 * env(i) * (w - 0.7 * prev);
                prev = w;
                active[pos + i] = true;
            }
        }
        pos += len + (range(rng, 0.03, 0.25) * sr) as usize;
    }
    (out, active)
}

/// Delays `x` by `d` samples (zero outside the signal). Integer delays are
/// exact shifts; fractional delays use a Blackman-windowed sinc.
pub fn delay_signal(x: &[f64], d: f64) -> Vec<f64> {
    let n = x.len();
    let whole = floor(d);
    let frac = d - whole;
    let shift = whole as i64;
    let at = |i: i64| -> f64 { if i >= 0 && (i as usize) < n { x[i as usize] } else { 0.0 } };
    if frac == 0.0 {
        return (0..n as i64).map(|i| at(i - shift)).collect();
    }
    const HALF: i64 = 32;
    let span = (2 * HALF) as f64;
    let taps: Vec<(i64, f64)> = (-HALF + 1..=HALF)
        .map(|j| {
            let u = j as f64 - frac;
            let sinc = sin(PI * u) / (PI * u);
            let p = (u + HALF as f64) / span;
            let win = 0.42 - 0.5 * cos(TWO_PI * p) + 0.08 * cos(2.0 * TWO_PI * p);
            (j, sinc * win)
        })
        .collect();
    (0..n as i64)
        .map(|i| taps.iter().map(|&(j, h)| at(i - shift - j) * h).sum())
        .collect()
}

fn shaped_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut lp = 0.0;
    (0..n)
        .map(|_| {
            let w = gaussian(rng);
            lp = 0.95 * lp + 0.05 * w;
            4.0 * lp + 0.3 * w
        })
        .collect()
}

fn babble(rng: &mut ChaCha8Rng, n: usize, channels: usize, sr: f64) -> Vec<Vec<f64>> {
    let streams: Vec<(f64, f64, f64)> = (0..8)
        .map(|_| (range(rng, 300.0, 3000.0), range(rng, 2.0, 6.0), range(rng, 0.0, TWO_PI)))
        .collect();
    (0..channels)
        .map(|_| {
            let mut out = vec![0.0; n];
            for &(fc, fm, phase) in &streams {
                // Two-pole resonator at fc.
                let r = 0.98;
                let a1 = 2.0 * r * cos(TWO_PI * fc / sr);
                let a2 = -r * r;
                let (mut y1, mut y2) = (0.0, 0.0);
                for (i, o) in out.iter_mut().enumerate() {
                    let y = gaussian(rng) + a1 * y1 + a2 * y2;
                    y2 = y1;
                    y1 = y;
                    let m = 0.5 + 0.5 * sin(TWO_PI * fm * i as f64 / sr + phase);
                    *o += m * m * y;
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_snr_is_noise_free() {
        let cfg = SceneConfig::new(1, 3, f64::INFINITY, 1.0, NoiseKind::Diffuse);
        let s = synth_scene(&cfg).unwrap();
        assert_eq!(s.noisy, s.images);
        assert!(s.noise.channels().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn measured_snr_matches_request() {
        for (kind, snr) in [(NoiseKind::White, 0.0), (NoiseKind::Diffuse, 5.0), (NoiseKind::Babble, -3.0)] {
            let s = synth_scene(&SceneConfig::new(7, 4, snr, 1.5, kind)).unwrap();
            assert!((s.measured_snr_db() - snr).abs() < 0.1, "{kind:?}");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SceneConfig::new(42, 2, 0.0, 1.0, NoiseKind::Babble);
        assert_eq!(synth_scene(&cfg).unwrap(), synth_scene(&cfg).unwrap());
        let other = SceneConfig::new(43, 2, 0.0, 1.0, NoiseKind::Babble);
        assert_ne!(synth_scene(&cfg).unwrap().noisy, synth_scene(&other).unwrap().noisy);
    }

    #[test]
    fn components_sum_to_noisy() {
        let s = synth_scene(&SceneConfig::new(3, 6, 0.0, 1.0, NoiseKind::Diffuse)).unwrap();
        for c in 0..6 {
            for ((a, b), y) in s.images.channel(c).iter().zip(s.noise.channel(c)).zip(s.noisy.channel(c)) {
                assert_eq!(a + b, *y);
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = SceneConfig::new(1, 2, 0.0, 0.5, NoiseKind::White);
        assert!(synth_scene(&cfg).is_err());
        cfg.duration_s = 1.0;
        cfg.delays = vec![0.0, 17.0];
        assert!(synth_scene(&cfg).is_err());
        cfg.delays = vec![0.0];
        assert!(synth_scene(&cfg).is_err());
    }

    #[test]
    fn integer_delay_is_exact_shift() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y = delay_signal(&x, 3.0);
        assert_eq!(&y[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&y[3..], &x[..47]);
        let y = delay_signal(&x, -2.0);
        assert_eq!(&y[..48], &x[2..]);
    }

    #[test]
    fn fractional_delay_of_slow_sine() {
        let f = 0.01;
        let x: Vec<f64> = (0..400).map(|i| sin(TWO_PI * f * i as f64)).collect();
        let y = delay_signal(&x, 2.5);
        for i in 100..300 {
            assert!((y[i] - sin(TWO_PI * f * (i as f64 - 2.5))).abs() < 1e-3);
        }
    }

    #[test]
    fn speech_has_pauses() {
        let s = synth_scene(&SceneConfig::new(5, 1, f64::INFINITY, 3.0, NoiseKind::White)).unwrap();
        let frac = s.active.iter().filter(|&&a| a).count() as f64 / s.active.len() as f64;
        assert!(frac > 0.4 && frac < 0.95, "activity {frac}");
    }
}
