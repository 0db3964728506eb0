//! EM spatial clustering over pairwise inter-channel phase differences.
//!
//! One speech source with a continuous delay per channel pair and a
//! per-frequency wrapped-Gaussian phase residual competes with a noise
//! source whose phase differences are uniform on the circle. The E-step
//! yields the speech posterior mask; the M-step re-estimates delays,
//! variances and the speech prior from any mask, which is what allows the
//! EM to be seeded or steered by an external (e.g. network) mask.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{cos, exp, ln, round, wrap_phase, PI, TWO_PI};
use crate::{Error, Mask, MultichannelSpectrogram, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// Largest admissible delay magnitude, in samples.
    pub tau_max: f64,
    /// Spacing of the delay candidate grid, in samples.
    pub grid_step: f64,
    /// Lower bound for the per-frequency residual variance, rad^2.
    pub sigma2_floor: f64,
    pub prior_min: f64,
    pub prior_max: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { tau_max: 16.0, grid_step: 0.5, sigma2_floor: 1e-4, prior_min: 0.01, prior_max: 0.99 }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tau_max >= 0.0 && self.grid_step > 0.0 && self.sigma2_floor > 0.0) {
            return Err(Error::InvalidParameter(format!("bad EM configuration {self:?}")));
        }
        if !(0.0 < self.prior_min && self.prior_min <= self.prior_max && self.prior_max < 1.0) {
            return Err(Error::InvalidParameter("prior bounds must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// `{-tau_max, -tau_max + step, ..., tau_max}`.
    pub fn delay_grid(&self) -> Vec<f64> {
        let n = round(self.tau_max / self.grid_step) as i64;
        (-n..=n).map(|i| i as f64 * self.grid_step).collect()
    }
}

/// Phase differences `angle(Y_i conj(Y_j))` for a set of channel pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct IpdObservations {
    pairs: Vec<(usize, usize)>,
    phi: Vec<f64>,
    omega: Vec<f64>,
    frames: usize,
}

impl IpdObservations {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn freq_bins(&self) -> usize {
        self.omega.len()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Angular frequency of each bin, rad/sample.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Phase differences of pair `p` at bin `k`, one per frame.
    pub fn phi(&self, p: usize, k: usize) -> &[f64] {
        let f = self.omega.len();
        let start = (p * f + k) * self.frames;
        &self.phi[start..start + self.frames]
    }

    fn check_mask(&self, m: &Mask) -> Result<()> {
        if m.freq_bins() != self.freq_bins() || m.frames() != self.frames {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} vs observations {}x{}",
                m.freq_bins(),
                m.frames(),
                self.freq_bins(),
                self.frames
            )));
        }
        Ok(())
    }
}

/// Every channel paired against channel 0.
pub fn reference_pairs(channels: usize) -> Vec<(usize, usize)> {
    (1..channels).map(|j| (0, j)).collect()
}

pub fn compute_ipd(spec: &MultichannelSpectrogram, pairs: &[(usize, usize)]) -> Result<IpdObservations> {
    if spec.channels() < 2 {
        return Err(Error::TooFewChannels { needed: 2, got: spec.channels() });
    }
    if pairs.is_empty() {
        return Err(Error::Empty("channel pair list"));
    }
    for &(i, j) in pairs {
        spec.check_channel(i)?;
        spec.check_channel(j)?;
        if i == j {
            return Err(Error::InvalidParameter(format!("pair ({i}, {j}) repeats a channel")));
        }
    }
    let f = spec.freq_bins();
    let n = spec.frames();
    let mut phi = Vec::with_capacity(pairs.len() * f * n);
    for &(i, j) in pairs {
        for k in 0..f {
            for (a, b) in spec.row(i, k).iter().zip(spec.row(j, k)) {
                let (ar, ai) = (a.re as f64, a.im as f64);
                let (br, bi) = (b.re as f64, b.im as f64);
                // a * conj(b)
                let re = ar * br + ai * bi;
                let im = ai * br - ar * bi;
                phi.push(wrap_phase(crate::math::atan2(im, re)));
            }
        }
    }
    let fft = spec.config().fft_size as f64;
    let omega = (0..f).map(|k| TWO_PI * k as f64 / fft).collect();
    Ok(IpdObservations { pairs: pairs.to_vec(), phi, omega, frames: n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialParams {
    /// Speech delay per pair, in samples (positive: second channel lags).
    pub tau: Vec<f64>,
    /// Residual variance per frequency bin, rad^2.
    pub sigma2: Vec<f64>,
    /// Speech prior.
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub params: SpatialParams,
    /// Speech posterior (or the initial mask before any E-step).
    pub mask: Mask,
    /// Data log-likelihood under `params`.
    pub loglik: f64,
    pub iteration: usize,
    /// Log-likelihood at the start of every iteration, then the final value.
    pub history: Vec<f64>,
}

const DEFAULT_SIGMA2: f64 = PI * PI / 3.0;

/// Seeds the EM from `init_mask` (or a flat 0.5 mask) by one M-step.
///
/// Without previous parameters the delay search scores candidates by the
/// mask-weighted `sum cos(residual)`, which for a flat mask is the PHAT
/// cross-correlation histogram.
pub fn init_state(obs: &IpdObservations, init_mask: Option<&Mask>, cfg: &EmConfig) -> Result<EmState> {
    let mask = match init_mask {
        Some(m) => {
            obs.check_mask(m)?;
            m.clone()
        }
        None => Mask::filled(obs.freq_bins(), obs.frames(), 0.5),
    };
    let params = m_step(obs, &mask, None, cfg)?;
    let (_, loglik) = e_step(obs, &params)?;
    Ok(EmState { params, mask, loglik, iteration: 0, history: Vec::new() })
}

/// Speech posterior per time-frequency point and the total log-likelihood.
pub fn e_step(obs: &IpdObservations, params: &SpatialParams) -> Result<(Mask, f64)> {
    let np = obs.pairs.len();
    if params.tau.len() != np || params.sigma2.len() != obs.freq_bins() {
        return Err(Error::ShapeMismatch("parameters do not match observations".into()));
    }
    if !(params.prior > 0.0 && params.prior < 1.0) {
        return Err(Error::InvalidParameter(format!("prior {} outside (0, 1)", params.prior)));
    }
    let f = obs.freq_bins();
    let n = obs.frames;
    let log_prior_sp = ln(params.prior);
    let log_prior_noise = ln(1.0 - params.prior);
    let log_noise = -(np as f64) * ln(TWO_PI);
    let mut values = vec![0.0f32; f * n];
    let mut log_sp = vec![0.0f64; n];
    let mut loglik = 0.0;
    for k in 0..f {
        let s2 = params.sigma2[k];
        if !(s2 > 0.0) {
            return Err(Error::NonFinite("sigma2"));
        }
        let norm = -0.5 * ln(TWO_PI * s2);
        let inv = 0.5 / s2;
        log_sp.iter_mut().for_each(|v| *v = 0.0);
        for p in 0..np {
            let shift = obs.omega[k] * params.tau[p];
            for (acc, &phi) in log_sp.iter_mut().zip(obs.phi(p, k)) {
                let r = wrap_phase(phi - shift);
                *acc += norm - r * r * inv;
            }
        }
        for (t, &ls) in log_sp.iter().enumerate() {
            let a = log_prior_sp + ls;
            let b = log_prior_noise + log_noise;
            let m = a.max(b);
            let lse = m + ln(exp(a - m) + exp(b - m));
            if !lse.is_finite() {
                return Err(Error::NonFinite("likelihood"));
            }
            loglik += lse;
            values[k * n + t] = exp(a - lse).clamp(0.0, 1.0) as f32;
        }
    }
    Ok((Mask::new(values, f, n)?, loglik))
}

/// Re-estimates the spatial parameters from a speech mask.
///
/// With `current` parameters the delay search maximizes the mask-weighted
/// Gaussian log-likelihood under the current variances, and the current
/// delay is always a candidate, so the expected complete-data
/// log-likelihood never decreases.
pub fn m_step(
    obs: &IpdObservations,
    mask: &Mask,
    current: Option<&SpatialParams>,
    cfg: &EmConfig,
) -> Result<SpatialParams> {
    cfg.validate()?;
    obs.check_mask(mask)?;
    let total: f64 = mask.values().iter().map(|&v| v as f64).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMask("all-zero mask"));
    }
    let f = obs.freq_bins();
    let grid = cfg.delay_grid();
    let mut tau = Vec::with_capacity(obs.pairs.len());
    for p in 0..obs.pairs.len() {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for &cand in &grid {
            let score = match current {
                Some(cur) => gaussian_score(obs, mask, p, cand, &cur.sigma2),
                None => cosine_score(obs, mask, p, cand),
            };
            if score > best.0 {
                best = (score, cand);
            }
        }
        // The current delay is always a candidate and wins ties.
        if let Some(cur) = current {
            let cur_score = gaussian_score(obs, mask, p, cur.tau[p], &cur.sigma2);
            if cur_score >= best.0 {
                best = (cur_score, cur.tau[p]);
            }
        }
        tau.push(best.1);
    }

    let np = obs.pairs.len() as f64;
    let mut sigma2 = Vec::with_capacity(f);
    for k in 0..f {
        let weights = mask.row(k);
        let wsum: f64 = weights.iter().map(|&w| w as f64).sum();
        if wsum <= 0.0 {
            sigma2.push(current.map_or(DEFAULT_SIGMA2, |c| c.sigma2[k]));
            continue;
        }
        let mut acc = 0.0;
        for (p, &tp) in tau.iter().enumerate() {
            let shift = obs.omega[k] * tp;
            for (&phi, &w) in obs.phi(p, k).iter().zip(weights) {
                let r = wrap_phase(phi - shift);
                acc += w as f64 * r * r;
            }
        }
        sigma2.push((acc / (np * wsum)).max(cfg.sigma2_floor));
    }

    let prior = (total / mask.values().len() as f64).clamp(cfg.prior_min, cfg.prior_max);
    Ok(SpatialParams { tau, sigma2, prior })
}

fn gaussian_score(obs: &IpdObservations, mask: &Mask, p: usize, tau: f64, sigma2: &[f64]) -> f64 {
    let mut score = 0.0;
    for k in 0..obs.freq_bins() {
        let shift = obs.omega[k] * tau;
        let mut acc = 0.0;
        for (&phi, &w) in obs.phi(p, k).iter().zip(mask.row(k)) {
            let r = wrap_phase(phi - shift);
            acc += w as f64 * r * r;
        }
        score -= acc * 0.5 / sigma2[k];
    }
    score
}

fn cosine_score(obs: &IpdObservations, mask: &Mask, p: usize, tau: f64) -> f64 {
    let mut score = 0.0;
    for k in 0..obs.freq_bins() {
        let shift = obs.omega[k] * tau;
        for (&phi, &w) in obs.phi(p, k).iter().zip(mask.row(k)) {
            score += w as f64 * cos(phi - shift);
        }
    }
    score
}

/// Supplies the mask averaged with the EM posterior on held iterations.
pub trait HoldSource {
    fn hold_mask<'a>(&'a self, iteration: usize, posterior: &'a Mask) -> &'a Mask;
}

impl HoldSource for Mask {
    fn hold_mask<'a>(&'a self, _iteration: usize, _posterior: &'a Mask) -> &'a Mask {
        self
    }
}

/// Hold source that always echoes the current posterior, which makes a held
/// run coincide with plain EM.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrackPosterior;

impl HoldSource for TrackPosterior {
    fn hold_mask<'a>(&'a self, _iteration: usize, posterior: &'a Mask) -> &'a Mask {
        posterior
    }
}

/// Runs `iters` EM iterations. For iterations `1..=hold_iters` the posterior
/// is replaced by its average with `hold` before the M-step.
pub fn run_em(
    obs: &IpdObservations,
    init_mask: Option<&Mask>,
    iters: usize,
    hold: Option<&Mask>,
    hold_iters: usize,
    cfg: &EmConfig,
) -> Result<EmState> {
    run_em_with(obs, init_mask, iters, hold.map(|m| m as &dyn HoldSource), hold_iters, cfg)
}

pub fn run_em_with(
    obs: &IpdObservations,
    init_mask: Option<&Mask>,
    iters: usize,
    hold: Option<&dyn HoldSource>,
    hold_iters: usize,
    cfg: &EmConfig,
) -> Result<EmState> {
    if iters == 0 {
        return Err(Error::InvalidParameter("EM needs at least one iteration".into()));
    }
    if hold_iters > iters {
        return Err(Error::InvalidParameter(format!(
            "hold iterations ({hold_iters}) exceed total iterations ({iters})"
        )));
    }
    let mut state = init_state(obs, init_mask, cfg)?;
    for it in 1..=iters {
        let (posterior, ll) = e_step(obs, &state.params)?;
        state.history.push(ll);
        let driving = match hold {
            Some(h) if it <= hold_iters => {
                let held = h.hold_mask(it, &posterior);
                obs.check_mask(held)?;
                crate::mask::combine(&posterior, held, crate::CombineMode::Average)?
            }
            _ => posterior,
        };
        state.params = m_step(obs, &driving, Some(&state.params), cfg)?;
        state.iteration = it;
    }
    let (posterior, ll) = e_step(obs, &state.params)?;
    state.history.push(ll);
    state.mask = posterior;
    state.loglik = ll;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sin;
    use crate::{Complex32, StftConfig};
    use proptest::prelude::*;

    /// Two-channel spectrogram with an arbitrary per-bin complex value in
    /// channel 0 and channel 1 delayed by `d` samples.
    fn delayed_pair(d: f64, frames: usize, fft: usize) -> MultichannelSpectrogram {
        let cfg = StftConfig::new(fft, fft / 2);
        let f = cfg.freq_bins();
        let mut s = MultichannelSpectrogram::zeros(2, frames, cfg, 16000);
        for k in 0..f {
            let w = TWO_PI * k as f64 / fft as f64;
            for t in 0..frames {
                let a = 1.0 + 0.5 * sin((k * 7 + t * 3) as f64);
                let ph = sin((k * 13 + t * 29) as f64) * 3.0;
                let c0 = Complex32::new((a * cos(ph)) as f32, (a * sin(ph)) as f32);
                let ph1 = ph - w * d;
                let c1 = Complex32::new((a * cos(ph1)) as f32, (a * sin(ph1)) as f32);
                s.set(0, k, t, c0);
                s.set(1, k, t, c1);
            }
        }
        s
    }

    #[test]
    fn identical_channels_give_zero_ipd() {
        let s = delayed_pair(0.0, 4, 16);
        let obs = compute_ipd(&s, &reference_pairs(2)).unwrap();
        for k in 0..obs.freq_bins() {
            assert!(obs.phi(0, k).iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn delayed_channel_gives_linear_phase() {
        let d = 3.0;
        let s = delayed_pair(d, 4, 32);
        let obs = compute_ipd(&s, &reference_pairs(2)).unwrap();
        for k in 0..obs.freq_bins() {
            let expected = wrap_phase(obs.omega()[k] * d);
            for &v in obs.phi(0, k) {
                assert!(wrap_phase(v - expected).abs() < 1e-5, "k={k}");
                assert!(v > -PI && v <= PI);
            }
        }
    }

    #[test]
    fn one_channel_is_rejected() {
        let s = MultichannelSpectrogram::zeros(1, 3, StftConfig::new(16, 8), 16000);
        assert!(matches!(compute_ipd(&s, &[]), Err(Error::TooFewChannels { .. })));
    }

    fn toy_obs() -> IpdObservations {
        compute_ipd(&delayed_pair(2.0, 6, 32), &reference_pairs(2)).unwrap()
    }

    #[test]
    fn flat_init_mask_equals_default() {
        let obs = toy_obs();
        let cfg = EmConfig::default();
        let a = init_state(&obs, None, &cfg).unwrap();
        let half = Mask::filled(obs.freq_bins(), obs.frames(), 0.5);
        let b = init_state(&obs, Some(&half), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.params.prior, 0.5);
        assert_eq!(a.params.tau, vec![2.0]);
    }

    #[test]
    fn posterior_concentrates_on_matching_phase() {
        let obs = toy_obs();
        let params = SpatialParams { tau: vec![2.0], sigma2: vec![1e-4; obs.freq_bins()], prior: 0.5 };
        let (m, ll) = e_step(&obs, &params).unwrap();
        assert!(ll.is_finite());
        let min = m.values().iter().cloned().fold(1.0f32, f32::min);
        assert!(min > 0.99, "min posterior {min}");
    }

    #[test]
    fn flat_likelihood_returns_prior() {
        // With sigma2 = 1e6 the speech density is 1/sqrt(2 pi 1e6); pick the
        // closed-form posterior as the oracle.
        let obs = toy_obs();
        let s2 = 1e6;
        let params = SpatialParams { tau: vec![2.0], sigma2: vec![s2; obs.freq_bins()], prior: 0.3 };
        let (m, _) = e_step(&obs, &params).unwrap();
        let lsp = 1.0 / (TWO_PI * s2).sqrt();
        let ln_ = 1.0 / TWO_PI;
        let expected = 0.3 * lsp / (0.3 * lsp + 0.7 * ln_);
        for &v in m.values() {
            assert!((v as f64 - expected).abs() < 1e-6);
        }
        // sigma2 = 2 pi at zero residual: both densities equal 1/(2 pi).
        let params = SpatialParams { tau: vec![2.0], sigma2: vec![TWO_PI; obs.freq_bins()], prior: 0.5 };
        let (m, _) = e_step(&obs, &params).unwrap();
        for &v in m.values() {
            assert!((v - 0.5).abs() < 1e-5);
        }
    }

    #[test]
    fn m_step_on_exact_phase_hits_floor() {
        let obs = toy_obs();
        let ones = Mask::filled(obs.freq_bins(), obs.frames(), 1.0);
        let p = m_step(&obs, &ones, None, &EmConfig::default()).unwrap();
        assert_eq!(p.tau, vec![2.0]);
        assert!(p.sigma2.iter().all(|&s| s == 1e-4));
        assert_eq!(p.prior, 0.99);
        let m = Mask::filled(obs.freq_bins(), obs.frames(), 0.3);
        let p = m_step(&obs, &m, None, &EmConfig::default()).unwrap();
        assert!((p.prior - 0.3).abs() < 1e-6);
        let zero = Mask::filled(obs.freq_bins(), obs.frames(), 0.0);
        assert!(matches!(m_step(&obs, &zero, None, &EmConfig::default()), Err(Error::DegenerateMask(_))));
    }

    #[test]
    fn hold_argument_validation() {
        let obs = toy_obs();
        let cfg = EmConfig::default();
        assert!(run_em(&obs, None, 0, None, 0, &cfg).is_err());
        assert!(run_em(&obs, None, 3, None, 4, &cfg).is_err());
        let wrong = Mask::filled(2, 2, 0.5);
        assert!(run_em(&obs, Some(&wrong), 3, None, 0, &cfg).is_err());
    }

    #[test]
    fn hold_zero_and_tracking_hold_match_plain_em() {
        let obs = toy_obs();
        let cfg = EmConfig::default();
        let plain = run_em(&obs, None, 5, None, 0, &cfg).unwrap();
        let other = Mask::filled(obs.freq_bins(), obs.frames(), 0.9);
        let held0 = run_em(&obs, None, 5, Some(&other), 0, &cfg).unwrap();
        assert_eq!(plain, held0);
        let tracked = run_em_with(&obs, None, 5, Some(&TrackPosterior), 5, &cfg).unwrap();
        assert_eq!(plain, tracked);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn swapping_pair_negates_phase_and_delay(d in -6.0f64..6.0) {
            let s = delayed_pair(d, 5, 32);
            let cfg = EmConfig::default();
            let fwd = compute_ipd(&s, &[(0, 1)]).unwrap();
            let rev = compute_ipd(&s, &[(1, 0)]).unwrap();
            for k in 0..fwd.freq_bins() {
                for (a, b) in fwd.phi(0, k).iter().zip(rev.phi(0, k)) {
                    prop_assert!(wrap_phase(a + b).abs() < 1e-9);
                }
            }
            let a = run_em(&fwd, None, 3, None, 0, &cfg).unwrap();
            let b = run_em(&rev, None, 3, None, 0, &cfg).unwrap();
            prop_assert_eq!(a.params.tau[0], -b.params.tau[0]);
            for (x, y) in a.mask.values().iter().zip(b.mask.values()) {
                prop_assert!((x - y).abs() < 1e-5);
            }
        }
    }
}
