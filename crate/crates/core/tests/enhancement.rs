use maskfuse_core::metrics::si_sdr;
use maskfuse_core::pipeline::{enhance, EnhanceOptions, MaskInputs, Method};
use maskfuse_core::scene::{synth_scene, NoiseKind, SceneConfig};
use maskfuse_core::signal::{istft, stft};
use maskfuse_core::{NetWeights, StftConfig};

fn score(estimate: &[f64], truth: &[f64]) -> f64 {
    let n = estimate.len().min(truth.len());
    si_sdr(&estimate[..n], &truth[..n]).unwrap()
}

#[test]
fn oracle_mask_dominates_every_other_method() {
    let cfg = StftConfig::default();
    for (seed, channels, kind) in [(41, 2, NoiseKind::Diffuse), (42, 6, NoiseKind::Babble), (43, 4, NoiseKind::White)] {
        let scene = synth_scene(&SceneConfig::new(seed, channels, 0.0, 4.0, kind)).unwrap();
        let noisy = stft(&scene.noisy, cfg).unwrap();
        let clean = stft(&scene.images.select(0).unwrap(), cfg).unwrap();
        let weights = NetWeights::synthetic(seed, 8, noisy.freq_bins());
        let inputs = MaskInputs { weights: Some(&weights), network_mask: None, clean: Some(&clean) };
        let truth = scene.images.channel(0);
        let mut scores = Vec::new();
        for method in Method::ALL {
            let out = enhance(&noisy, &inputs, &EnhanceOptions::new(method)).unwrap();
            scores.push((method, score(istft(&out.output).unwrap().channel(0), truth)));
        }
        let oracle = scores.iter().find(|(m, _)| *m == Method::OracleIam).unwrap().1;
        for (m, s) in &scores {
            assert!(oracle >= *s, "seed {seed}: oracle {oracle} below {m} {s}");
        }
    }
}

#[test]
fn identical_inputs_give_identical_outputs_for_every_method() {
    let scene = synth_scene(&SceneConfig::new(44, 3, 5.0, 2.0, NoiseKind::Diffuse)).unwrap();
    let cfg = StftConfig::new(512, 256);
    let noisy = stft(&scene.noisy, cfg).unwrap();
    let clean = stft(&scene.images.select(0).unwrap(), cfg).unwrap();
    let weights = NetWeights::synthetic(1, 4, noisy.freq_bins());
    let inputs = MaskInputs { weights: Some(&weights), network_mask: None, clean: Some(&clean) };
    for method in Method::ALL {
        let opts = EnhanceOptions::new(method);
        assert_eq!(enhance(&noisy, &inputs, &opts).unwrap(), enhance(&noisy, &inputs, &opts).unwrap(), "{method}");
    }
}
