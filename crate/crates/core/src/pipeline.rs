//! End-to-end enhancement: mask estimation by the selected method, then
//! mask-driven MVDR and a mask postfilter.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::beamformer::{apply_beamformer, apply_postfilter, estimate_covariances, mvdr_weights_or_reference};
use crate::mask::{average_channel_masks, combine, ideal_amplitude_mask};
use crate::net::predict_mask;
use crate::noise::{mcra_track, mcspp_beamform, mcspp_enhance, mcspp_track, minima_track, wiener_mask, McraParams, McsppParams, PowerSpectrum};
use crate::spatial::{compute_ipd, reference_pairs, run_em, run_em_with, EmConfig, EmState, HoldSource};
use crate::{CombineMode, Error, Mask, MultichannelSpectrogram, NetWeights, Result};

pub const VALID_METHODS: &str =
    "lstm, messl, combine:avg, combine:max, combine:min, lstm-init-messl, mcra, minima, mcspp, oracle-iam";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lstm,
    Messl,
    Combine(CombineMode),
    LstmInitMessl,
    Mcra,
    Minima,
    Mcspp,
    OracleIam,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Lstm,
        Method::Messl,
        Method::Combine(CombineMode::Average),
        Method::Combine(CombineMode::Max),
        Method::Combine(CombineMode::Min),
        Method::LstmInitMessl,
        Method::Mcra,
        Method::Minima,
        Method::Mcspp,
        Method::OracleIam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lstm => "lstm",
            Method::Messl => "messl",
            Method::Combine(CombineMode::Average) => "combine:avg",
            Method::Combine(CombineMode::Max) => "combine:max",
            Method::Combine(CombineMode::Min) => "combine:min",
            Method::LstmInitMessl => "lstm-init-messl",
            Method::Mcra => "mcra",
            Method::Minima => "minima",
            Method::Mcspp => "mcspp",
            Method::OracleIam => "oracle-iam",
        }
    }

    /// Whether the method needs the single-channel network mask.
    pub fn needs_network(self) -> bool {
        matches!(self, Method::Lstm | Method::Combine(_) | Method::LstmInitMessl)
    }

    /// Whether the method runs spatial clustering (and so needs two channels).
    pub fn is_spatial(self) -> bool {
        matches!(self, Method::Messl | Method::Combine(_) | Method::LstmInitMessl)
    }

    pub fn needs_clean(self) -> bool {
        self == Method::OracleIam
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(mode) = s.strip_prefix("combine:") {
            if let Ok(m) = mode.parse::<CombineMode>() {
                return Ok(Method::Combine(m));
            }
        }
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod { given: s.to_string(), valid: VALID_METHODS })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceOptions {
    pub method: Method,
    pub ref_channel: usize,
    /// EM iterations.
    pub iters: usize,
    /// Leading EM iterations averaged with the network mask (lstm-init-messl).
    pub hold_iters: usize,
    /// Postfilter suppression floor in dB; `None` applies the mask unfloored.
    pub post_floor_db: Option<f64>,
    pub em: EmConfig,
    /// Minimum-statistics window for the minima method, in frames.
    pub minima_window: usize,
    pub mcra: McraParams,
    pub mcspp: McsppParams,
}

impl EnhanceOptions {
    pub fn new(method: Method) -> Self {
        EnhanceOptions {
            method,
            ref_channel: 0,
            iters: 16,
            hold_iters: 11,
            post_floor_db: None,
            em: EmConfig::default(),
            minima_window: 96,
            mcra: McraParams::default(),
            mcspp: McsppParams::default(),
        }
    }

    fn floor_db(&self) -> f64 {
        self.post_floor_db.unwrap_or(f64::INFINITY)
    }
}

/// Optional inputs some methods need.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaskInputs<'a> {
    pub weights: Option<&'a NetWeights>,
    /// Precomputed channel-averaged network mask; takes precedence over `weights`.
    pub network_mask: Option<&'a Mask>,
    /// Clean speech, either one channel aligned with the reference channel or
    /// one channel per array channel.
    pub clean: Option<&'a MultichannelSpectrogram>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enhanced {
    /// Single-channel enhanced spectrogram.
    pub output: MultichannelSpectrogram,
    /// The mask that drove the beamformer and postfilter (speech presence
    /// probability for mcspp).
    pub mask: Mask,
    pub em: Option<EmState>,
    /// Bins where MVDR fell back to the reference channel.
    pub fallback_bins: Vec<usize>,
}

/// Network mask of every channel, averaged.
pub fn lstm_average_mask(spec: &MultichannelSpectrogram, weights: &NetWeights) -> Result<Mask> {
    let masks = (0..spec.channels())
        .map(|c| predict_mask(spec, c, weights))
        .collect::<Result<Vec<_>>>()?;
    average_channel_masks(&masks)
}

/// MVDR driven by `mask`, followed by the mask postfilter.
pub fn beamform_with_mask(
    spec: &MultichannelSpectrogram,
    mask: &Mask,
    ref_channel: usize,
    post_floor_db: f64,
) -> Result<(MultichannelSpectrogram, Vec<usize>)> {
    let cov = estimate_covariances(spec, mask)?;
    let (w, fallback) = mvdr_weights_or_reference(&cov, ref_channel)?;
    let beam = apply_beamformer(spec, &w)?;
    Ok((apply_postfilter(&beam, mask, post_floor_db)?, fallback))
}

/// Plain spatial clustering from a flat start.
pub fn messl_mask(spec: &MultichannelSpectrogram, opts: &EnhanceOptions) -> Result<EmState> {
    require_channels(spec, 2)?;
    let obs = compute_ipd(spec, &reference_pairs(spec.channels()))?;
    run_em(&obs, None, opts.iters, None, 0, &opts.em)
}

/// EM seeded by `init`, averaged with `hold` for the first `hold_iters`
/// iterations. The driving mask is the average of the final hold mask and
/// the final posterior.
pub fn lstm_init_messl(
    spec: &MultichannelSpectrogram,
    init: Option<&Mask>,
    hold: &dyn HoldSource,
    opts: &EnhanceOptions,
) -> Result<(Mask, EmState)> {
    require_channels(spec, 2)?;
    let obs = compute_ipd(spec, &reference_pairs(spec.channels()))?;
    let em = run_em_with(&obs, init, opts.iters, Some(hold), opts.hold_iters, &opts.em)?;
    let partner = hold.hold_mask(opts.iters, &em.mask);
    let driving = combine(partner, &em.mask, CombineMode::Average)?;
    Ok((driving, em))
}

fn require_channels(spec: &MultichannelSpectrogram, needed: usize) -> Result<()> {
    if spec.channels() < needed {
        return Err(Error::TooFewChannels { needed, got: spec.channels() });
    }
    Ok(())
}

fn network_mask(spec: &MultichannelSpectrogram, inputs: &MaskInputs<'_>) -> Result<Mask> {
    match (inputs.network_mask, inputs.weights) {
        (Some(m), _) => {
            m.check_spec(spec)?;
            Ok(m.clone())
        }
        (None, Some(w)) => lstm_average_mask(spec, w),
        (None, None) => Err(Error::InvalidParameter("this method needs network weights (--weights)".into())),
    }
}

fn oracle_mask(spec: &MultichannelSpectrogram, clean: &MultichannelSpectrogram, ref_channel: usize) -> Result<Mask> {
    if clean.channels() == 1 {
        ideal_amplitude_mask(clean, &spec.channel(ref_channel)?, 0)
    } else {
        ideal_amplitude_mask(clean, spec, ref_channel)
    }
}

/// Runs the selected method end to end in the STFT domain.
pub fn enhance(spec: &MultichannelSpectrogram, inputs: &MaskInputs<'_>, opts: &EnhanceOptions) -> Result<Enhanced> {
    spec.check_channel(opts.ref_channel)?;
    if opts.method.is_spatial() {
        require_channels(spec, 2)?;
    }
    let mut em = None;
    let mask = match opts.method {
        Method::Lstm => network_mask(spec, inputs)?,
        Method::Messl => {
            let state = messl_mask(spec, opts)?;
            let m = state.mask.clone();
            em = Some(state);
            m
        }
        Method::Combine(mode) => {
            let lstm = network_mask(spec, inputs)?;
            let state = messl_mask(spec, opts)?;
            let m = combine(&lstm, &state.mask, mode)?;
            em = Some(state);
            m
        }
        Method::LstmInitMessl => {
            let lstm = network_mask(spec, inputs)?;
            let (m, state) = lstm_init_messl(spec, Some(&lstm), &lstm, opts)?;
            em = Some(state);
            m
        }
        Method::Mcra | Method::Minima => {
            let power = PowerSpectrum::of_channel(spec, opts.ref_channel)?;
            let track = if opts.method == Method::Mcra {
                mcra_track(&power, &opts.mcra)?
            } else {
                minima_track(&power, opts.minima_window)?
            };
            wiener_mask(&power, &track)?
        }
        Method::Mcspp => {
            let params = McsppParams { ref_channel: opts.ref_channel, ..opts.mcspp };
            let (output, mask) = if spec.channels() >= 2 {
                let state = mcspp_track(spec, &params)?;
                let q = &state.q;
                let mask = Mask::from_fn(spec.freq_bins(), spec.frames(), |k, t| q[k * spec.frames() + t]);
                (mcspp_beamform(spec, &state, params.block_frames)?, mask)
            } else {
                let power = PowerSpectrum::of_channel(spec, 0)?;
                let gain = wiener_mask(&power, &mcra_track(&power, &McraParams::default())?)?;
                (mcspp_enhance(spec, &params)?, gain)
            };
            return Ok(Enhanced { output, mask, em: None, fallback_bins: Vec::new() });
        }
        Method::OracleIam => {
            let clean = inputs
                .clean
                .ok_or_else(|| Error::InvalidParameter("oracle-iam needs the clean signal (--clean)".into()))?;
            oracle_mask(spec, clean, opts.ref_channel)?
        }
    };
    if mask.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidParameter(format!("{} produced a mask outside [0, 1]", opts.method)));
    }
    let (output, fallback_bins) = beamform_with_mask(spec, &mask, opts.ref_channel, opts.floor_db())?;
    Ok(Enhanced { output, mask, em, fallback_bins })
}
