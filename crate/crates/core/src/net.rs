//! BLSTM mask inference.
//!
//! A single bidirectional LSTM layer reads normalized log-magnitude frames;
//! a sigmoid output layer maps the concatenated forward/backward states to a
//! `(0, 1)` mask per frequency. Gate blocks are ordered input, forget,
//! candidate, output along the first axis of every kernel and bias, and all
//! matrices are row-major.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{log10, logistic, sqrt, tanh};
use crate::{Error, Mask, MultichannelSpectrogram, Result};

/// Floor added to magnitudes before the dB conversion.
pub const DB_EPSILON: f64 = 1e-8;

/// Tensor names of the weight container, in serialization order.
pub const TENSOR_NAMES: [&str; 10] = [
    "lstm.fw.W",
    "lstm.fw.U",
    "lstm.fw.b",
    "lstm.bw.W",
    "lstm.bw.U",
    "lstm.bw.b",
    "out.W",
    "out.b",
    "stats.mean",
    "stats.std",
];

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows in reverse order.
    pub fn reversed_rows(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(self.row(self.rows - 1 - r));
        }
        out
    }
}

/// Weights of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    /// `[4H x F]`
    pub input: Vec<f32>,
    /// `[4H x H]`
    pub recurrent: Vec<f32>,
    /// `[4H]`
    pub bias: Vec<f32>,
}

impl LstmDirection {
    pub fn zeros(hidden: usize, inputs: usize) -> Self {
        LstmDirection {
            input: vec![0.0; 4 * hidden * inputs],
            recurrent: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Hidden size implied by the bias length.
    pub fn hidden(&self) -> usize {
        self.bias.len() / 4
    }

    fn check(&self, hidden: usize, inputs: usize, prefix: &str) -> Result<()> {
        check_len(&format!("{prefix}.W"), self.input.len(), 4 * hidden * inputs)?;
        check_len(&format!("{prefix}.U"), self.recurrent.len(), 4 * hidden * hidden)?;
        check_len(&format!("{prefix}.b"), self.bias.len(), 4 * hidden)
    }
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Tensor {
            name: name.to_string(),
            reason: format!("expected {want} values, found {got}"),
        });
    }
    Ok(())
}

/// Per-frequency normalization statistics of the dB features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl FeatureStats {
    pub fn validate(&self) -> Result<()> {
        check_len("stats.std", self.std.len(), self.mean.len())?;
        if let Some(s) = self.std.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::Tensor {
                name: "stats.std".into(),
                reason: format!("standard deviation {s} is not positive"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetWeights {
    hidden: usize,
    freq_bins: usize,
    pub fw: LstmDirection,
    pub bw: LstmDirection,
    /// `[F x 2H]`; columns `0..H` read the forward state, `H..2H` the backward.
    pub out_w: Vec<f32>,
    /// `[F]`
    pub out_b: Vec<f32>,
    pub stats: FeatureStats,
}

/// A named tensor as stored in the weight container.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NetWeights {
    pub fn new(
        hidden: usize,
        freq_bins: usize,
        fw: LstmDirection,
        bw: LstmDirection,
        out_w: Vec<f32>,
        out_b: Vec<f32>,
        stats: FeatureStats,
    ) -> Result<Self> {
        if hidden == 0 || freq_bins == 0 {
            return Err(Error::InvalidParameter("hidden size and frequency bins must be positive".into()));
        }
        fw.check(hidden, freq_bins, "lstm.fw")?;
        bw.check(hidden, freq_bins, "lstm.bw")?;
        check_len("out.W", out_w.len(), freq_bins * 2 * hidden)?;
        check_len("out.b", out_b.len(), freq_bins)?;
        check_len("stats.mean", stats.mean.len(), freq_bins)?;
        stats.validate()?;
        let w = NetWeights { hidden, freq_bins, fw, bw, out_w, out_b, stats };
        for t in w.to_tensors() {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Tensor { name: t.name, reason: "non-finite value".into() });
            }
        }
        Ok(w)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    /// Deterministic pseudo-random weights for fixtures and tests. Kernel
    /// entries are uniform in `±1/sqrt(H)`, statistics are plausible dB
    /// levels.
    pub fn synthetic(seed: u64, hidden: usize, freq_bins: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uni = |scale: f64| -> f32 {
            let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            ((2.0 * u - 1.0) * scale) as f32
        };
        let s = 1.0 / sqrt(hidden as f64);
        let direction = |uni: &mut dyn FnMut(f64) -> f32| LstmDirection {
            input: (0..4 * hidden * freq_bins).map(|_| uni(s)).collect(),
            recurrent: (0..4 * hidden * hidden).map(|_| uni(s)).collect(),
            bias: (0..4 * hidden).map(|_| uni(s)).collect(),
        };
        let fw = direction(&mut uni);
        let bw = direction(&mut uni);
        let so = 1.0 / sqrt(2.0 * hidden as f64);
        let out_w = (0..freq_bins * 2 * hidden).map(|_| uni(so)).collect();
        let out_b = (0..freq_bins).map(|_| uni(so)).collect();
        let mean = (0..freq_bins).map(|_| -20.0 + uni(5.0)).collect();
        let std = (0..freq_bins).map(|_| 10.0 + uni(2.0)).collect();
        NetWeights::new(hidden, freq_bins, fw, bw, out_w, out_b, FeatureStats { mean, std })
            .expect("synthetic weights are consistent")
    }

    /// All-zero network (mask = logistic(0) = 0.5 everywhere).
    pub fn zeros(hidden: usize, freq_bins: usize) -> Self {
        NetWeights {
            hidden,
            freq_bins,
            fw: LstmDirection::zeros(hidden, freq_bins),
            bw: LstmDirection::zeros(hidden, freq_bins),
            out_w: vec![0.0; freq_bins * 2 * hidden],
            out_b: vec![0.0; freq_bins],
            stats: FeatureStats { mean: vec![0.0; freq_bins], std: vec![1.0; freq_bins] },
        }
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        let (h, f) = (self.hidden, self.freq_bins);
        let t = |name: &str, dims: Vec<usize>, data: &[f32]| Tensor {
            name: name.to_string(),
            dims,
            data: data.to_vec(),
        };
        vec![
            t("lstm.fw.W", vec![4 * h, f], &self.fw.input),
            t("lstm.fw.U", vec![4 * h, h], &self.fw.recurrent),
            t("lstm.fw.b", vec![4 * h], &self.fw.bias),
            t("lstm.bw.W", vec![4 * h, f], &self.bw.input),
            t("lstm.bw.U", vec![4 * h, h], &self.bw.recurrent),
            t("lstm.bw.b", vec![4 * h], &self.bw.bias),
            t("out.W", vec![f, 2 * h], &self.out_w),
            t("out.b", vec![f], &self.out_b),
            t("stats.mean", vec![f], &self.stats.mean),
            t("stats.std", vec![f], &self.stats.std),
        ]
    }

    /// Assembles weights from named tensors, checking that every required
    /// tensor is present and that all dimensions agree.
    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        let mut slots: [Option<Tensor>; 10] = Default::default();
        for t in tensors {
            if t.dims.iter().product::<usize>() != t.data.len() {
                return Err(Error::Tensor {
                    name: t.name,
                    reason: "dimensions do not match data length".into(),
                });
            }
            if let Some(i) = TENSOR_NAMES.iter().position(|n| *n == t.name) {
                slots[i] = Some(t);
            }
        }
        for (slot, name) in slots.iter().zip(TENSOR_NAMES) {
            if slot.is_none() {
                return Err(Error::Tensor { name: name.to_string(), reason: "missing tensor".into() });
            }
        }
        let [fw_w, fw_u, fw_b, bw_w, bw_u, bw_b, out_w, out_b, mean, std] =
            slots.map(|s| s.expect("checked above"));

        if fw_u.dims.len() != 2 || fw_u.dims[0] != 4 * fw_u.dims[1] || fw_u.dims[1] == 0 {
            return Err(dim_error(&fw_u, "expected [4H, H]"));
        }
        let h = fw_u.dims[1];
        if fw_w.dims.len() != 2 || fw_w.dims[0] != 4 * h || fw_w.dims[1] == 0 {
            return Err(dim_error(&fw_w, "expected [4H, F]"));
        }
        let f = fw_w.dims[1];
        let expect = |t: &Tensor, dims: &[usize]| -> Result<()> {
            if t.dims != dims {
                Err(dim_error(t, &format!("expected {dims:?}")))
            } else {
                Ok(())
            }
        };
        expect(&fw_b, &[4 * h])?;
        expect(&bw_w, &[4 * h, f])?;
        expect(&bw_u, &[4 * h, h])?;
        expect(&bw_b, &[4 * h])?;
        expect(&out_w, &[f, 2 * h])?;
        expect(&out_b, &[f])?;
        expect(&mean, &[f])?;
        expect(&std, &[f])?;
        NetWeights::new(
            h,
            f,
            LstmDirection { input: fw_w.data, recurrent: fw_u.data, bias: fw_b.data },
            LstmDirection { input: bw_w.data, recurrent: bw_u.data, bias: bw_b.data },
            out_w.data,
            out_b.data,
            FeatureStats { mean: mean.data, std: std.data },
        )
    }
}

fn dim_error(t: &Tensor, what: &str) -> Error {
    Error::Tensor { name: t.name.clone(), reason: format!("dimension mismatch {:?}: {what}", t.dims) }
}

/// `(20 log10(|Y| + eps) - mean) / std`, one row per frame.
pub fn normalize_features(
    spec: &MultichannelSpectrogram,
    channel: usize,
    stats: &FeatureStats,
) -> Result<Matrix> {
    spec.check_channel(channel)?;
    stats.validate()?;
    let f = spec.freq_bins();
    check_len("stats.mean", stats.mean.len(), f)?;
    let mut x = Matrix::zeros(spec.frames(), f);
    for k in 0..f {
        let (mu, sd) = (stats.mean[k] as f64, stats.std[k] as f64);
        for (t, v) in spec.row(channel, k).iter().enumerate() {
            let mag = sqrt((v.re as f64) * (v.re as f64) + (v.im as f64) * (v.im as f64));
            x.data[t * f + k] = (20.0 * log10(mag + DB_EPSILON) - mu) / sd;
        }
    }
    Ok(x)
}

/// Runs one LSTM direction over the rows of `x` from first to last, starting
/// from zero state. Returns the hidden state sequence `[T x H]`.
pub fn lstm_forward(x: &Matrix, dir: &LstmDirection) -> Result<Matrix> {
    let h = dir.hidden();
    if h == 0 || dir.bias.len() != 4 * h {
        return Err(Error::Tensor { name: "lstm.b".into(), reason: "bias length is not 4H".into() });
    }
    let f = x.cols;
    check_len("lstm.W", dir.input.len(), 4 * h * f)?;
    check_len("lstm.U", dir.recurrent.len(), 4 * h * h)?;
    let mut out = Matrix::zeros(x.rows, h);
    let mut hprev = vec![0.0f64; h];
    let mut cell = vec![0.0f64; h];
    let mut z = vec![0.0f64; 4 * h];
    for t in 0..x.rows {
        let xt = x.row(t);
        for (r, zr) in z.iter_mut().enumerate() {
            let wi = &dir.input[r * f..(r + 1) * f];
            let ur = &dir.recurrent[r * h..(r + 1) * h];
            let mut acc = dir.bias[r] as f64;
            for (w, v) in wi.iter().zip(xt) {
                acc += *w as f64 * v;
            }
            for (u, v) in ur.iter().zip(&hprev) {
                acc += *u as f64 * v;
            }
            *zr = acc;
        }
        for j in 0..h {
            let i = logistic(z[j]);
            let fg = logistic(z[h + j]);
            let g = tanh(z[2 * h + j]);
            let o = logistic(z[3 * h + j]);
            cell[j] = fg * cell[j] + i * g;
            hprev[j] = o * tanh(cell[j]);
        }
        out.row_mut(t).copy_from_slice(&hprev);
    }
    Ok(out)
}

// Largest f32 below 1; keeps mask values strictly inside (0, 1).
const MASK_CEIL: f64 = 1.0 - f32::EPSILON as f64 / 2.0;

/// Predicts the speech mask of one channel.
pub fn predict_mask(
    spec: &MultichannelSpectrogram,
    channel: usize,
    weights: &NetWeights,
) -> Result<Mask> {
    if spec.freq_bins() != weights.freq_bins {
        return Err(Error::ShapeMismatch(format!(
            "network expects {} frequency bins, spectrogram has {}",
            weights.freq_bins,
            spec.freq_bins()
        )));
    }
    let x = normalize_features(spec, channel, &weights.stats)?;
    let (fwd, bwd) = bidirectional_states(&x, weights)?;
    mask_from_states(&fwd, &bwd, weights)
}

/// Forward states, and backward states already restored to forward time order.
pub fn bidirectional_states(x: &Matrix, weights: &NetWeights) -> Result<(Matrix, Matrix)> {
    let fwd = lstm_forward(x, &weights.fw)?;
    let bwd = lstm_forward(&x.reversed_rows(), &weights.bw)?.reversed_rows();
    Ok((fwd, bwd))
}

fn mask_from_states(fwd: &Matrix, bwd: &Matrix, weights: &NetWeights) -> Result<Mask> {
    let (h, f, frames) = (weights.hidden, weights.freq_bins, fwd.rows);
    let mut values = vec![0.0f32; f * frames];
    for t in 0..frames {
        let (hf, hb) = (fwd.row(t), bwd.row(t));
        for k in 0..f {
            let row = &weights.out_w[k * 2 * h..(k + 1) * 2 * h];
            // The two halves are summed separately so that swapping directions
            // (and output columns) reproduces the same floating-point result.
            let a: f64 = row[..h].iter().zip(hf).map(|(w, v)| *w as f64 * v).sum();
            let b: f64 = row[h..].iter().zip(hb).map(|(w, v)| *w as f64 * v).sum();
            let z = weights.out_b[k] as f64 + (a + b);
            if !z.is_finite() {
                return Err(Error::NonFinite("network activation"));
            }
            values[k * frames + t] =
                logistic(z).clamp(f32::MIN_POSITIVE as f64, MASK_CEIL) as f32;
        }
    }
    Mask::new(values, f, frames)
}
