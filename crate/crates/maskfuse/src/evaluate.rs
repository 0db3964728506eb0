//! Metric reports for enhanced signals against a reference.

use std::path::{Path, PathBuf};

use maskfuse_core::metrics::{frame_len_for, seg_snr, si_sdr};
use maskfuse_core::Waveform;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::report::{Aggregate, ConfigEcho, Report};
use crate::wav::load_wav;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Channel of multichannel inputs that is scored.
    pub ref_channel: usize,
    /// Largest length difference, in samples, that is trimmed rather than rejected.
    pub max_mismatch: usize,
    pub seg_frame_ms: f64,
    pub config: ConfigEcho,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { ref_channel: 0, max_mismatch: 1024, seg_frame_ms: 32.0, config: ConfigEcho::default() }
    }
}

fn pick(w: &Waveform, ch: usize) -> Result<&[f64]> {
    if w.num_channels() == 1 {
        Ok(w.channel(0))
    } else if ch < w.num_channels() {
        Ok(w.channel(ch))
    } else {
        Err(maskfuse_core::Error::ChannelOutOfRange { channel: ch, channels: w.num_channels() }.into())
    }
}

/// Scores `enhanced` (and optionally the unprocessed `noisy` input) against
/// `reference`. Lengths within `max_mismatch` are trimmed to the shortest
/// with a warning.
pub fn evaluate(
    utt: &str,
    enhanced: &Waveform,
    reference: &Waveform,
    noisy: Option<&Waveform>,
    opts: &EvalOptions,
) -> Result<Report> {
    let sr = reference.sample_rate();
    if enhanced.sample_rate() != sr || noisy.is_some_and(|n| n.sample_rate() != sr) {
        return Err(Error::Usage(format!("{utt}: sample rates differ")));
    }
    let est = pick(enhanced, opts.ref_channel)?;
    let refc = pick(reference, opts.ref_channel)?;
    let noisy_c = noisy.map(|n| pick(n, opts.ref_channel)).transpose()?;
    let lens: Vec<usize> = [Some(est.len()), Some(refc.len()), noisy_c.map(|n| n.len())].into_iter().flatten().collect();
    let (lo, hi) = (*lens.iter().min().unwrap(), *lens.iter().max().unwrap());
    if hi - lo > opts.max_mismatch {
        return Err(Error::Usage(format!(
            "{utt}: lengths differ by {} samples (more than {})",
            hi - lo,
            opts.max_mismatch
        )));
    }
    let mut warnings = Vec::new();
    if hi != lo {
        warnings.push(format!("trimmed to {lo} samples (lengths differed by {})", hi - lo));
    }
    let frame = frame_len_for(sr, opts.seg_frame_ms);
    let (est, refc) = (&est[..lo], &refc[..lo]);
    let si = si_sdr(est, refc)?;
    let seg = seg_snr(est, refc, frame)?;
    let (si_n, seg_n) = match noisy_c {
        Some(n) => (Some(si_sdr(&n[..lo], refc)?), Some(seg_snr(&n[..lo], refc, frame)?)),
        None => (None, None),
    };
    Ok(Report {
        utt: utt.to_string(),
        method: None,
        si_sdr: Some(si),
        seg_snr: Some(seg),
        si_sdr_noisy: si_n,
        seg_snr_noisy: seg_n,
        delta_si_sdr: si_n.map(|v| si - v),
        delta_seg_snr: seg_n.map(|v| seg - v),
        warnings,
        config: ConfigEcho { sample_rate: sr, ref_channel: opts.ref_channel, ..opts.config.clone() },
    })
}

/// `*.wav` files of a directory, sorted by name.
pub fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn utt_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Evaluates every `*.wav` in `enhanced_dir` against the file of the same
/// name in `reference_dir` (and `noisy_dir`). Returns per-utterance reports
/// in name order and their aggregate.
pub fn evaluate_dir(
    enhanced_dir: &Path,
    reference_dir: &Path,
    noisy_dir: Option<&Path>,
    opts: &EvalOptions,
) -> Result<(Vec<Report>, Aggregate)> {
    let files = wav_files(enhanced_dir)?;
    if files.is_empty() {
        return Err(Error::Usage(format!("{}: no .wav files", enhanced_dir.display())));
    }
    let reports = files
        .par_iter()
        .map(|path| {
            let name = path.file_name().expect("listed files have names");
            let enhanced = load_wav(path)?;
            let reference = load_wav(reference_dir.join(name))?;
            let noisy = noisy_dir.map(|d| load_wav(d.join(name))).transpose()?;
            evaluate(&utt_name(path), &enhanced, &reference, noisy.as_ref(), opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let agg = Aggregate::of(&reports);
    Ok((reports, agg))
}
