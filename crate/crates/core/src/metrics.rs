//! Separation metrics: SI-SDR, segmental SNR and mask ROC area.

use alloc::format;
use alloc::vec::Vec;

use crate::math::log10;
use crate::{Error, Mask, Result};

/// Ceiling applied to SI-SDR when the residual vanishes.
pub const SI_SDR_CAP_DB: f64 = 60.0;
pub const SEG_SNR_MIN_DB: f64 = -10.0;
pub const SEG_SNR_MAX_DB: f64 = 35.0;

/// Scale-invariant SDR of `estimate` against `reference`, in dB, capped at
/// [`SI_SDR_CAP_DB`].
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|s| s * s).sum();
    if !(ref_energy > 0.0) {
        return Err(Error::DegenerateMask("zero reference signal"));
    }
    let dot: f64 = estimate.iter().zip(reference).map(|(x, s)| x * s).sum();
    let alpha = dot / ref_energy;
    let target: f64 = alpha * alpha * ref_energy;
    let residual: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(x, s)| {
            let e = x - alpha * s;
            e * e
        })
        .sum();
    if residual <= 0.0 || target / residual >= 1e6 {
        return Ok(SI_SDR_CAP_DB);
    }
    if target <= 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * log10(target / residual)).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Mean per-frame SNR over non-overlapping frames of `frame_len` samples,
/// each clamped to `[-10, 35]` dB. Frames with a silent reference are skipped.
pub fn seg_snr(estimate: &[f64], reference: &[f64], frame_len: usize) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    if frame_len == 0 {
        return Err(Error::InvalidParameter("frame length must be positive".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (e, s) in estimate.chunks_exact(frame_len).zip(reference.chunks_exact(frame_len)) {
        let sig: f64 = s.iter().map(|v| v * v).sum();
        if sig <= 0.0 {
            continue;
        }
        let err: f64 = e.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
        let snr = if err <= 0.0 { SEG_SNR_MAX_DB } else { 10.0 * log10(sig / err) };
        total += snr.clamp(SEG_SNR_MIN_DB, SEG_SNR_MAX_DB);
        count += 1;
    }
    if count == 0 {
        return Err(Error::DegenerateMask("reference is silent in every frame"));
    }
    Ok(total / count as f64)
}

/// Frame length in samples for a duration in milliseconds.
pub fn frame_len_for(sample_rate: u32, frame_ms: f64) -> usize {
    ((sample_rate as f64 * frame_ms / 1000.0) as usize).max(1)
}

/// Area under the ROC curve of `scores` against binary `labels`, from a sweep
/// over `thresholds` evenly spaced points in `[0, 1]` (a point is called
/// positive when its score is `>=` the threshold), integrated by trapezoids.
pub fn mask_auc(scores: &Mask, labels: &[bool], thresholds: usize) -> Result<f64> {
    if labels.len() != scores.values().len() {
        return Err(Error::ShapeMismatch("labels do not match mask".into()));
    }
    if thresholds < 2 {
        return Err(Error::InvalidParameter("need at least two thresholds".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateMask("labels contain a single class"));
    }
    let mut roc: Vec<(f64, f64)> = (0..thresholds)
        .map(|i| {
            let th = i as f64 / (thresholds - 1) as f64;
            let (mut tp, mut fp) = (0usize, 0usize);
            for (&s, &l) in scores.values().iter().zip(labels) {
                if s as f64 >= th {
                    if l {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            (fp as f64 / neg as f64, tp as f64 / pos as f64)
        })
        .collect();
    roc.push((0.0, 0.0));
    roc.push((1.0, 1.0));
    roc.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(roc.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{sin, sqrt};
    use alloc::vec;

    fn tone(n: usize) -> Vec<f64> {
        (0..n).map(|i| sin(i as f64 * 0.05) + 0.3 * sin(i as f64 * 0.31)).collect()
    }

    #[test]
    fn perfect_and_scaled_estimates_hit_cap() {
        let s = tone(1000);
        assert_eq!(si_sdr(&s, &s).unwrap(), SI_SDR_CAP_DB);
        let doubled: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_sdr(&doubled, &s).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn equal_power_orthogonal_noise_is_zero_db() {
        let s = tone(1000);
        let raw: Vec<f64> = (0..1000).map(|i| sin(i as f64 * 1.7 + 0.2)).collect();
        // Gram-Schmidt against s, then scale to the power of s.
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let proj: f64 = raw.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / ss;
        let orth: Vec<f64> = raw.iter().zip(&s).map(|(a, b)| a - proj * b).collect();
        let oo: f64 = orth.iter().map(|v| v * v).sum();
        let g = sqrt(ss / oo);
        let est: Vec<f64> = s.iter().zip(&orth).map(|(a, b)| a + g * b).collect();
        assert!(si_sdr(&est, &s).unwrap().abs() < 1e-9);
    }

    #[test]
    fn si_sdr_errors() {
        assert!(si_sdr(&[1.0], &[0.0]).is_err());
        assert!(si_sdr(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn seg_snr_clamps() {
        let s = tone(2048);
        assert_eq!(seg_snr(&s, &s, 512).unwrap(), SEG_SNR_MAX_DB);
        assert_eq!(seg_snr(&vec![0.0; 2048], &s, 512).unwrap(), 0.0);
        let small: Vec<f64> = s.iter().map(|v| v * 1e-9).collect();
        assert!(seg_snr(&small, &s, 512).unwrap() < 1e-6);
    }

    #[test]
    fn seg_snr_of_inverted_estimates() {
        // An estimate that is the negated reference has SNR -6 dB per frame.
        let s = tone(1024);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let v = seg_snr(&neg, &s, 512).unwrap();
        assert!((v - 10.0 * log10(0.25)).abs() < 1e-9);
        let far: Vec<f64> = s.iter().map(|v| -10.0 * v).collect();
        assert_eq!(seg_snr(&far, &s, 512).unwrap(), SEG_SNR_MIN_DB);
    }

    #[test]
    fn seg_snr_at_ten_db_per_frame() {
        let s = tone(4096);
        let mut est = s.clone();
        for (fs, fe) in s.chunks_exact(512).zip(est.chunks_exact_mut(512)) {
            let p: f64 = fs.iter().map(|v| v * v).sum();
            let d: Vec<f64> = (0..512).map(|i| sin(i as f64 * 2.3 + 1.0)).collect();
            let dp: f64 = d.iter().map(|v| v * v).sum();
            let g = sqrt(p / dp / 10.0);
            for (e, n) in fe.iter_mut().zip(&d) {
                *e += g * n;
            }
        }
        assert!((seg_snr(&est, &s, 512).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn auc_extremes() {
        let m = Mask::new(vec![0.9, 0.8, 0.1, 0.2], 2, 2).unwrap();
        assert!((mask_auc(&m, &[true, true, false, false], 101).unwrap() - 1.0).abs() < 1e-12);
        assert!(mask_auc(&m, &[false, false, true, true], 101).unwrap() < 1e-12);
        let flat = Mask::filled(2, 2, 0.5);
        assert!((mask_auc(&flat, &[true, false, true, false], 101).unwrap() - 0.5).abs() < 1e-12);
        assert!(mask_auc(&flat, &[true; 4], 101).is_err());
    }
}
