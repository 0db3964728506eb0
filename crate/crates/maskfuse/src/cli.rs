//! Command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use maskfuse_core::pipeline::{EnhanceOptions, Method};
use maskfuse_core::reference::{align_close_mic, build_reference};
use maskfuse_core::scene::{default_delays, synth_scene, NoiseKind, SceneConfig};
use maskfuse_core::signal::stft;
use maskfuse_core::{NetWeights, StftConfig, Waveform};
use serde::{Deserialize, Serialize};

use crate::enhance::{dir_jobs, run_jobs, Job, Settings};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate, evaluate_dir, EvalOptions};
use crate::mnw1::{load_weights, save_weights};
use crate::report::{write_lines, Aggregate, ConfigEcho};
use crate::wav::{load_wav, save_wav};

#[derive(Debug, Parser)]
#[command(name = "maskfuse", version, about = "Mask-driven multichannel speech enhancement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance a multichannel WAV file (or every WAV file in a directory).
    Enhance(EnhanceArgs),
    /// Score enhanced audio against a reference.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic noisy scene.
    Synth(SynthArgs),
    /// Build a training reference from an array recording and a close-talking mic.
    MakeReference(MakeReferenceArgs),
    /// Write deterministic pseudo-random network weights.
    GenWeights(GenWeightsArgs),
}

#[derive(Debug, Args)]
pub struct StftArgs {
    #[arg(long, default_value_t = 1024)]
    pub fft: usize,
    #[arg(long, default_value_t = 512)]
    pub hop: usize,
}

impl StftArgs {
    fn config(&self) -> Result<StftConfig> {
        let cfg = StftConfig::new(self.fft, self.hop);
        cfg.cola_gain()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// Noisy multichannel WAV file or directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Output WAV file (directory when --input is a directory).
    #[arg(long)]
    pub out: PathBuf,
    /// One of: lstm, messl, combine:avg, combine:max, combine:min,
    /// lstm-init-messl, mcra, minima, mcspp, oracle-iam.
    #[arg(long)]
    pub method: String,
    /// MNW1 network weights (lstm, combine:*, lstm-init-messl).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Clean reference (file or directory); enables metrics and oracle-iam.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Where to write the driving mask (MSK1; directory in batch mode).
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
    /// JSON-lines report; defaults to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub ref_channel: usize,
    #[command(flatten)]
    pub stft: StftArgs,
    #[arg(long, default_value_t = 16)]
    pub iters: usize,
    /// EM iterations held with the network mask (lstm-init-messl).
    #[arg(long, default_value_t = 11)]
    pub hold: usize,
    /// Postfilter maximum suppression in dB; unset applies the mask directly.
    #[arg(long, allow_negative_numbers = true)]
    pub post_floor_db: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Enhanced WAV file or directory.
    #[arg(long)]
    pub enhanced: PathBuf,
    /// Reference WAV file or directory.
    #[arg(long)]
    pub reference: PathBuf,
    /// Unprocessed input, for improvement deltas.
    #[arg(long)]
    pub noisy: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub ref_channel: usize,
    /// Frame size; lengths differing by more than this are rejected.
    #[arg(long, default_value_t = 1024)]
    pub fft: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub channels: usize,
    /// Speech-to-noise ratio in dB (`inf` for none).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub snr: f64,
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
    /// white, diffuse or babble.
    #[arg(long, default_value = "diffuse")]
    pub noise: String,
    /// Comma-separated per-channel delays in samples; drawn from the seed when omitted.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub delays: Option<Vec<f64>>,
    #[arg(long, default_value_t = 16000)]
    pub sample_rate: u32,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MakeReferenceArgs {
    #[arg(long)]
    pub array: PathBuf,
    #[arg(long)]
    pub close: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub ref_channel: usize,
    #[command(flatten)]
    pub stft: StftArgs,
    /// Largest close-mic alignment lag searched, in samples.
    #[arg(long, default_value_t = 1600)]
    pub max_lag: usize,
}

#[derive(Debug, Args)]
pub struct GenWeightsArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 513)]
    pub freq_bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Contents of `meta.json` written by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub seed: u64,
    pub channels: usize,
    pub delays: Vec<f64>,
    pub snr_db: Option<f64>,
    pub measured_snr_db: Option<f64>,
    pub duration_s: f64,
    pub noise_kind: String,
    pub sample_rate: u32,
}

/// Parses `args` (including the program name) and runs the command,
/// writing reports to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(stdout, "{e}").map_err(|io| Error::io("<stdout>", io))?;
            return Ok(());
        }
        Err(e) => return Err(Error::Usage(e.render().to_string().trim_end().to_string())),
    };
    match cli.command {
        Command::Enhance(a) => run_enhance(a, stdout),
        Command::Evaluate(a) => run_evaluate(a, stdout),
        Command::Synth(a) => run_synth(a, stdout),
        Command::MakeReference(a) => run_make_reference(a, stdout),
        Command::GenWeights(a) => run_gen_weights(a, stdout),
    }
}

fn report_sink(path: Option<&Path>, stdout: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut file = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            f(&mut file)
        }
        None => f(stdout),
    }
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn run_enhance(a: EnhanceArgs, stdout: &mut dyn Write) -> Result<()> {
    let method: Method = a.method.parse()?;
    if method.needs_network() && a.weights.is_none() {
        return Err(Error::Usage(format!("method {method} needs --weights")));
    }
    if method.needs_clean() && a.clean.is_none() {
        return Err(Error::Usage(format!("method {method} needs --clean")));
    }
    let weights = a.weights.as_ref().map(load_weights).transpose()?;
    let mut options = EnhanceOptions::new(method);
    options.ref_channel = a.ref_channel;
    options.iters = a.iters;
    options.hold_iters = a.hold;
    options.post_floor_db = a.post_floor_db;
    let settings = Settings {
        stft: a.stft.config()?,
        options,
        weights,
        weights_label: a.weights.as_ref().map(|p| p.display().to_string()),
    };
    let jobs = if a.input.is_dir() {
        create_dir(&a.out)?;
        if let Some(m) = &a.mask_out {
            create_dir(m)?;
        }
        dir_jobs(&a.input, &a.out, a.mask_out.as_deref(), a.clean.as_deref())?
    } else {
        vec![Job { input: a.input.clone(), output: a.out.clone(), mask_out: a.mask_out.clone(), clean: a.clean.clone() }]
    };
    let reports = run_jobs(&jobs, &settings)?;
    report_sink(a.report.as_deref(), stdout, |w| {
        write_lines(w, &reports)?;
        if jobs.len() > 1 {
            write_lines(w, &[Aggregate::of(&reports)])?;
        }
        Ok(())
    })
}

fn run_evaluate(a: EvaluateArgs, stdout: &mut dyn Write) -> Result<()> {
    let opts = EvalOptions {
        ref_channel: a.ref_channel,
        max_mismatch: a.fft,
        config: ConfigEcho { fft_size: a.fft, hop: a.fft / 2, ..ConfigEcho::default() },
        ..EvalOptions::default()
    };
    if a.enhanced.is_dir() {
        let (reports, agg) = evaluate_dir(&a.enhanced, &a.reference, a.noisy.as_deref(), &opts)?;
        report_sink(a.report.as_deref(), stdout, |w| {
            write_lines(w, &reports)?;
            write_lines(w, &[agg])
        })
    } else {
        let enhanced = load_wav(&a.enhanced)?;
        let reference = load_wav(&a.reference)?;
        let noisy = a.noisy.as_ref().map(load_wav).transpose()?;
        let utt = crate::evaluate::utt_name(&a.enhanced);
        let report = evaluate(&utt, &enhanced, &reference, noisy.as_ref(), &opts)?;
        report_sink(a.report.as_deref(), stdout, |w| write_lines(w, &[report]))
    }
}

fn run_synth(a: SynthArgs, stdout: &mut dyn Write) -> Result<()> {
    let kind: NoiseKind = a.noise.parse()?;
    let mut cfg = SceneConfig::new(a.seed, a.channels, a.snr, a.duration, kind);
    cfg.sample_rate = a.sample_rate;
    cfg.delays = a.delays.clone().unwrap_or_else(|| default_delays(a.seed, a.channels));
    let scene = synth_scene(&cfg)?;
    create_dir(&a.out)?;
    save_wav(&scene.noisy, a.out.join("noisy.wav"))?;
    save_wav(&scene.clean, a.out.join("clean.wav"))?;
    let measured = scene.measured_snr_db();
    let meta = SceneMeta {
        seed: a.seed,
        channels: a.channels,
        delays: scene.delays.clone(),
        snr_db: a.snr.is_finite().then_some(a.snr),
        measured_snr_db: measured.is_finite().then_some(measured),
        duration_s: a.duration,
        noise_kind: kind.name().to_string(),
        sample_rate: a.sample_rate,
    };
    let path = a.out.join("meta.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
    write_lines(stdout, &[meta])
}

#[derive(Serialize)]
struct ReferenceSummary {
    out: String,
    lag: i64,
    fallback_bins: usize,
}

fn run_make_reference(a: MakeReferenceArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = a.stft.config()?;
    let array = load_wav(&a.array)?;
    let close = load_wav(&a.close)?;
    if close.sample_rate() != array.sample_rate() {
        return Err(Error::Usage("array and close-mic sample rates differ".into()));
    }
    if a.ref_channel >= array.num_channels() {
        return Err(maskfuse_core::Error::ChannelOutOfRange { channel: a.ref_channel, channels: array.num_channels() }.into());
    }
    let (aligned, lag) = align_close_mic(array.channel(a.ref_channel), close.channel(0), a.max_lag);
    let close = Waveform::mono(aligned, array.sample_rate())?;
    let reference = build_reference(&stft(&array, cfg)?, &stft(&close, cfg)?, a.ref_channel)?;
    save_wav(&reference.waveform.resized(array.len()), &a.out)?;
    let summary = ReferenceSummary {
        out: a.out.display().to_string(),
        lag,
        fallback_bins: reference.fallback_bins.len(),
    };
    write_lines(stdout, &[summary])
}

fn run_gen_weights(a: GenWeightsArgs, stdout: &mut dyn Write) -> Result<()> {
    if a.hidden == 0 || a.freq_bins == 0 {
        return Err(Error::Usage("--hidden and --freq-bins must be positive".into()));
    }
    let w = NetWeights::synthetic(a.seed, a.hidden, a.freq_bins);
    save_weights(&w, &a.out)?;
    writeln!(stdout, "{}", serde_json::json!({ "out": a.out.display().to_string(), "seed": a.seed, "hidden": a.hidden, "freq_bins": a.freq_bins }))
        .map_err(|e| Error::io("<stdout>", e))
}

/// The machine-readable line printed on failure.
pub fn error_line(e: &Error) -> String {
    serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string()
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Core(maskfuse_core::Error::UnknownMethod { .. }) => 2,
        _ => 1,
    }
}
