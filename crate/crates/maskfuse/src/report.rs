//! JSON-lines reports: one object per utterance, optionally followed by an
//! aggregate line.

use std::io::Write;

use serde::{Deserialize, Serialize};

/// Settings echoed into every report line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub fft_size: usize,
    pub hop: usize,
    pub ref_channel: usize,
    pub sample_rate: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hold_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub post_floor_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub utt: String,
    pub method: Option<String>,
    pub si_sdr: Option<f64>,
    pub seg_snr: Option<f64>,
    pub si_sdr_noisy: Option<f64>,
    pub seg_snr_noisy: Option<f64>,
    pub delta_si_sdr: Option<f64>,
    pub delta_seg_snr: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
    pub config: ConfigEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Always `"mean"`; distinguishes the aggregate line from utterance lines.
    pub aggregate: String,
    pub count: usize,
    pub si_sdr: Option<f64>,
    pub seg_snr: Option<f64>,
    pub si_sdr_noisy: Option<f64>,
    pub delta_si_sdr: Option<f64>,
    pub delta_seg_snr: Option<f64>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

impl Aggregate {
    pub fn of(reports: &[Report]) -> Self {
        Aggregate {
            aggregate: "mean".into(),
            count: reports.len(),
            si_sdr: mean(reports.iter().map(|r| r.si_sdr)),
            seg_snr: mean(reports.iter().map(|r| r.seg_snr)),
            si_sdr_noisy: mean(reports.iter().map(|r| r.si_sdr_noisy)),
            delta_si_sdr: mean(reports.iter().map(|r| r.delta_si_sdr)),
            delta_seg_snr: mean(reports.iter().map(|r| r.delta_seg_snr)),
        }
    }
}

pub fn write_lines<W: Write + ?Sized, T: Serialize>(out: &mut W, items: &[T]) -> crate::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, item)?;
        out.write_all(b"\n").map_err(|e| crate::Error::io("<report>", e))?;
    }
    Ok(())
}
