use maskfuse_core::mask::apply_mask;
use maskfuse_core::noise::{
    mcra_track, mcspp_enhance, mcspp_track, minima_track, wiener_mask, McraParams, McsppParams, NoiseTrack,
    PowerSpectrum,
};
use maskfuse_core::scene::{synth_scene, NoiseKind, SceneConfig};
use maskfuse_core::signal::stft;
use maskfuse_core::{Complex64, MultichannelSpectrogram, StftConfig};

const WARM_UP: usize = 100;

fn white_noise_power(seconds: f64) -> (PowerSpectrum, f64) {
    let scene = synth_scene(&SceneConfig::new(7, 1, 0.0, seconds, NoiseKind::White)).unwrap();
    let cfg = StftConfig::default();
    let spec = stft(&scene.noise, cfg).unwrap();
    let x = scene.noise.channel(0);
    let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    // Expected |X|^2 of white noise under a sqrt-Hann window: var * sum(w^2) = var * N / 2.
    (PowerSpectrum::of_channel(&spec, 0).unwrap(), var * cfg.fft_size as f64 / 2.0)
}

fn worst_bias_db(track: &NoiseTrack, truth: f64) -> f64 {
    (1..track.freq_bins - 1)
        .map(|k| {
            let row = &track.lambda_row(k)[WARM_UP..];
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            10.0 * (mean / truth).log10()
        })
        .fold(0.0f64, |w, d| if d.abs() > w.abs() { d } else { w })
}

#[test]
fn mcra_tracks_white_noise_within_two_db() {
    let (power, truth) = white_noise_power(30.0);
    let bias = worst_bias_db(&mcra_track(&power, &McraParams::default()).unwrap(), truth);
    assert!(bias.abs() <= 2.0, "worst bias {bias} dB");
}

#[test]
fn minima_tracks_white_noise_within_three_db() {
    let (power, truth) = white_noise_power(30.0);
    let bias = worst_bias_db(&minima_track(&power, 96).unwrap(), truth);
    assert!(bias.abs() <= 3.0, "worst bias {bias} dB");
}

fn frobenius_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let n: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    (d / n).sqrt()
}

fn sample_covariance(spec: &MultichannelSpectrogram, k: usize) -> Vec<Complex64> {
    let c = spec.channels();
    let mut cov = vec![Complex64::new(0.0, 0.0); c * c];
    let mut y = vec![Complex64::new(0.0, 0.0); c];
    for t in 0..spec.frames() {
        spec.snapshot(k, t, &mut y);
        for i in 0..c {
            for j in 0..c {
                cov[i * c + j] += y[i] * y[j].conj() / spec.frames() as f64;
            }
        }
    }
    cov
}

#[test]
fn mcspp_on_stationary_noise_stays_low_and_learns_the_covariance() {
    let scene = synth_scene(&SceneConfig::new(5, 4, 0.0, 30.0, NoiseKind::Diffuse)).unwrap();
    let spec = stft(&scene.noise, StftConfig::default()).unwrap();
    assert!(spec.frames() > 200);
    let state = mcspp_track(&spec, &McsppParams::default()).unwrap();
    let mut q = state.q.clone();
    q.sort_by(f64::total_cmp);
    let median = q[q.len() / 2];
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    assert!(median < 0.1 && mean < 0.15, "median {median}, mean {mean}");
    let block = 16;
    let mut errs: Vec<f64> = (0..spec.freq_bins())
        .map(|k| frobenius_rel(&state.mean_noise_cov[k * block..(k + 1) * block], &sample_covariance(&spec, k)))
        .collect();
    errs.sort_by(f64::total_cmp);
    assert!(errs[errs.len() / 2] <= 0.05, "median error {}", errs[errs.len() / 2]);
}

#[test]
fn mcspp_detects_clean_speech_on_high_energy_bins() {
    let scene = synth_scene(&SceneConfig::new(6, 4, f64::INFINITY, 5.0, NoiseKind::Diffuse)).unwrap();
    let spec = stft(&scene.noisy, StftConfig::default()).unwrap();
    let state = mcspp_track(&spec, &McsppParams::default()).unwrap();
    let peak = spec.values().iter().map(|v| v.norm_sqr()).fold(0.0f32, f32::max);
    let (mut high, mut detected) = (0usize, 0usize);
    for k in 0..spec.freq_bins() {
        for t in 0..spec.frames() {
            if spec.get(0, k, t).norm_sqr() > peak * 1e-3 {
                high += 1;
                if state.q[k * spec.frames() + t] > 0.5 {
                    detected += 1;
                }
            }
        }
    }
    assert!(high > 1000);
    assert!(detected as f64 >= 0.8 * high as f64, "{detected}/{high}");
}

#[test]
fn single_channel_mcspp_is_an_mcra_wiener_gain() {
    let scene = synth_scene(&SceneConfig::new(8, 1, 5.0, 3.0, NoiseKind::Babble)).unwrap();
    let spec = stft(&scene.noisy, StftConfig::default()).unwrap();
    let power = PowerSpectrum::of_channel(&spec, 0).unwrap();
    let gain = wiener_mask(&power, &mcra_track(&power, &McraParams::default()).unwrap()).unwrap();
    let expected = apply_mask(&spec, &gain, 0).unwrap();
    assert_eq!(mcspp_enhance(&spec, &McsppParams::default()).unwrap(), expected);
}
