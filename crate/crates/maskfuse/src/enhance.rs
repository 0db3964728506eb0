//! File-level enhancement: WAV in, enhanced WAV, MSK1 mask and a report out.

use std::path::{Path, PathBuf};

use maskfuse_core::mask::average_channel_masks;
use maskfuse_core::net::predict_mask;
use maskfuse_core::pipeline::{enhance, EnhanceOptions, Enhanced, MaskInputs};
use maskfuse_core::signal::{istft, stft};
use maskfuse_core::{Mask, MultichannelSpectrogram, NetWeights, StftConfig, Waveform};
use rayon::prelude::*;

use crate::error::Result;
use crate::evaluate::{evaluate, EvalOptions};
use crate::msk1::write_mask;
use crate::report::{ConfigEcho, Report};
use crate::wav::{load_wav, save_wav};

#[derive(Debug, Clone)]
pub struct Settings {
    pub stft: StftConfig,
    pub options: EnhanceOptions,
    pub weights: Option<NetWeights>,
    /// Shown in reports.
    pub weights_label: Option<String>,
}

impl Settings {
    pub fn echo(&self, sample_rate: u32) -> ConfigEcho {
        let spatial = self.options.method.is_spatial();
        ConfigEcho {
            fft_size: self.stft.fft_size,
            hop: self.stft.hop,
            ref_channel: self.options.ref_channel,
            sample_rate,
            iters: spatial.then_some(self.options.iters),
            hold_iters: (self.options.method == maskfuse_core::pipeline::Method::LstmInitMessl)
                .then_some(self.options.hold_iters),
            post_floor_db: self.options.post_floor_db,
            weights: self.weights_label.clone(),
        }
    }
}

/// Per-channel network masks computed in parallel, then averaged.
pub fn network_mask_parallel(spec: &MultichannelSpectrogram, weights: &NetWeights) -> Result<Mask> {
    let masks = (0..spec.channels())
        .into_par_iter()
        .map(|c| predict_mask(spec, c, weights))
        .collect::<maskfuse_core::Result<Vec<_>>>()?;
    Ok(average_channel_masks(&masks)?)
}

/// Enhances a multichannel waveform. The output has the input's length.
pub fn enhance_waveform(noisy: &Waveform, clean: Option<&Waveform>, settings: &Settings) -> Result<(Waveform, Enhanced)> {
    let spec = stft(noisy, settings.stft)?;
    let clean_spec = clean.map(|c| stft(&c.resized(noisy.len()), settings.stft)).transpose()?;
    let network = match (&settings.weights, settings.options.method.needs_network()) {
        (Some(w), true) => Some(network_mask_parallel(&spec, w)?),
        _ => None,
    };
    let inputs = MaskInputs {
        weights: settings.weights.as_ref(),
        network_mask: network.as_ref(),
        clean: clean_spec.as_ref(),
    };
    let result = enhance(&spec, &inputs, &settings.options)?;
    let out = istft(&result.output)?.resized(noisy.len());
    Ok((out, result))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub input: PathBuf,
    pub output: PathBuf,
    pub mask_out: Option<PathBuf>,
    pub clean: Option<PathBuf>,
}

/// Runs one job; metrics are filled in when a clean reference is given.
pub fn run_job(job: &Job, settings: &Settings) -> Result<Report> {
    let noisy = load_wav(&job.input)?;
    let clean = job.clean.as_ref().map(load_wav).transpose()?;
    let (out, result) = enhance_waveform(&noisy, clean.as_ref(), settings)?;
    save_wav(&out, &job.output)?;
    if let Some(p) = &job.mask_out {
        write_mask(&result.mask, p)?;
    }
    let utt = crate::evaluate::utt_name(&job.input);
    let mut report = match &clean {
        Some(c) => {
            let opts = EvalOptions {
                ref_channel: settings.options.ref_channel,
                max_mismatch: settings.stft.fft_size,
                config: settings.echo(noisy.sample_rate()),
                ..EvalOptions::default()
            };
            evaluate(&utt, &out, c, Some(&noisy), &opts)?
        }
        None => Report { utt, config: settings.echo(noisy.sample_rate()), ..Report::default() },
    };
    report.method = Some(settings.options.method.name().to_string());
    if !result.fallback_bins.is_empty() {
        report
            .warnings
            .push(format!("MVDR fell back to the reference channel in {} bins", result.fallback_bins.len()));
    }
    Ok(report)
}

/// Jobs for every `*.wav` in `input_dir`, writing into `out_dir` (and
/// `mask_dir`) under the same names.
pub fn dir_jobs(input_dir: &Path, out_dir: &Path, mask_dir: Option<&Path>, clean_dir: Option<&Path>) -> Result<Vec<Job>> {
    Ok(crate::evaluate::wav_files(input_dir)?
        .into_iter()
        .map(|input| {
            let name = input.file_name().expect("listed files have names").to_owned();
            Job {
                output: out_dir.join(&name),
                mask_out: mask_dir.map(|d| d.join(&name).with_extension("msk1")),
                clean: clean_dir.map(|d| d.join(&name)),
                input,
            }
        })
        .collect())
}

/// Runs jobs on the rayon pool; reports come back in job order.
pub fn run_jobs(jobs: &[Job], settings: &Settings) -> Result<Vec<Report>> {
    jobs.par_iter().map(|j| run_job(j, settings)).collect()
}
