use std::path::Path;
use std::process::Command;

use maskfuse::cli::run;
use maskfuse::msk1::read_mask;
use maskfuse::report::{Aggregate, Report};
use maskfuse::wav::{load_wav, save_wav};
use maskfuse_core::Waveform;
use serde_json::Value;

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_maskfuse"))
}

fn run_lines(args: &[&str]) -> Vec<Value> {
    let mut out = Vec::new();
    run(std::iter::once("maskfuse").chain(args.iter().copied()), &mut out).unwrap();
    String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn tone(len: usize, f: f64, phase: f64) -> Vec<f64> {
    (0..len).map(|i| 0.3 * (i as f64 * f + phase).sin() + 0.1 * (i as f64 * 0.013).sin()).collect()
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.wav");
    save_wav(&Waveform::new(vec![tone(4000, 0.1, 0.0), tone(4000, 0.1, 0.3)], 16000).unwrap(), &input).unwrap();
    let out = exe()
        .args(["enhance", "--input", input.to_str().unwrap(), "--out", dir.path().join("o.wav").to_str().unwrap()])
        .args(["--method", "gev"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line: Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(line["error"]["kind"], "usage");
    let message = line["error"]["message"].as_str().unwrap();
    for name in ["gev", "lstm", "messl", "combine:avg", "lstm-init-messl", "mcspp", "oracle-iam"] {
        assert!(message.contains(name), "{message}");
    }
}

#[test]
fn missing_input_exits_with_processing_code() {
    let out = exe().args(["enhance", "--input", "/nonexistent.wav", "--out", "/tmp/x.wav", "--method", "mcra"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let line: Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().lines().last().unwrap()).unwrap();
    assert!(line["error"]["message"].as_str().unwrap().contains("nonexistent"));
}

#[test]
fn identical_enhanced_and_reference_hit_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.wav"), dir.path().join("b.wav"));
    let w = Waveform::mono(tone(16000, 0.07, 0.0), 16000).unwrap();
    save_wav(&w, &a).unwrap();
    save_wav(&w, &b).unwrap();
    let lines = run_lines(&["evaluate", "--enhanced", a.to_str().unwrap(), "--reference", b.to_str().unwrap()]);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["si_sdr"], 60.0);
}

#[test]
fn enhanced_equal_to_noisy_has_zero_delta() {
    let dir = tempfile::tempdir().unwrap();
    let (noisy, reference) = (dir.path().join("n.wav"), dir.path().join("r.wav"));
    let clean = tone(16000, 0.07, 0.0);
    let corrupted: Vec<f64> = clean.iter().enumerate().map(|(i, v)| v + 0.05 * (i as f64 * 1.7).sin()).collect();
    save_wav(&Waveform::mono(corrupted, 16000).unwrap(), &noisy).unwrap();
    save_wav(&Waveform::mono(clean, 16000).unwrap(), &reference).unwrap();
    let n = noisy.to_str().unwrap();
    let lines = run_lines(&["evaluate", "--enhanced", n, "--reference", reference.to_str().unwrap(), "--noisy", n]);
    assert_eq!(lines[0]["delta_si_sdr"], 0.0);
    assert_eq!(lines[0]["delta_seg_snr"], 0.0);
}

fn write_scene(dir: &Path, name: &str, seed: u64) {
    let scene = maskfuse_core::scene::synth_scene(&maskfuse_core::scene::SceneConfig::new(
        seed,
        2,
        5.0,
        1.5,
        maskfuse_core::scene::NoiseKind::White,
    ))
    .unwrap();
    save_wav(&scene.noisy, dir.join("noisy").join(name)).unwrap();
    save_wav(&scene.images.select(0).unwrap(), dir.join("clean").join(name)).unwrap();
}

#[test]
fn batch_enhance_reports_every_utterance_and_their_mean() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["noisy", "clean"] {
        std::fs::create_dir(dir.path().join(sub)).unwrap();
    }
    for (i, name) in ["u1.wav", "u2.wav", "u3.wav"].iter().enumerate() {
        write_scene(dir.path(), name, i as u64 + 1);
    }
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let lines = run_lines(&[
        "enhance", "--input", &p("noisy"), "--out", &p("out"), "--method", "messl", "--clean", &p("clean"),
        "--mask-out", &p("masks"),
    ]);
    assert_eq!(lines.len(), 4);
    let reports: Vec<Report> = lines[..3].iter().map(|v| serde_json::from_value(v.clone()).unwrap()).collect();
    assert_eq!(reports.iter().map(|r| r.utt.as_str()).collect::<Vec<_>>(), ["u1", "u2", "u3"]);
    let agg: Aggregate = serde_json::from_value(lines[3].clone()).unwrap();
    assert_eq!(agg.count, 3);
    let sum: f64 = reports.iter().map(|r| r.si_sdr.unwrap()).sum();
    assert!((agg.si_sdr.unwrap() * 3.0 - sum).abs() < 1e-9);
    let delta: f64 = reports.iter().map(|r| r.delta_si_sdr.unwrap()).sum();
    assert!((agg.delta_si_sdr.unwrap() * 3.0 - delta).abs() < 1e-9);
    for name in ["u1", "u2", "u3"] {
        let out = load_wav(dir.path().join("out").join(format!("{name}.wav"))).unwrap();
        let input = load_wav(dir.path().join("noisy").join(format!("{name}.wav"))).unwrap();
        assert_eq!((out.num_channels(), out.len()), (1, input.len()));
        let mask = read_mask(dir.path().join("masks").join(format!("{name}.msk1"))).unwrap();
        assert!(mask.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    let eval = run_lines(&["evaluate", "--enhanced", &p("out"), "--reference", &p("clean"), "--noisy", &p("noisy")]);
    assert_eq!(eval.len(), 4);
    assert_eq!(eval[3]["aggregate"], "mean");
    // Evaluation reads the 16-bit files back, so it differs from the in-memory score by quantization only.
    for (e, r) in eval[..3].iter().zip(&reports) {
        assert!((e["si_sdr"].as_f64().unwrap() - r.si_sdr.unwrap()).abs() < 0.05);
    }
}

#[test]
fn synth_writes_scene_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scene");
    let lines = run_lines(&[
        "synth", "--seed", "4", "--channels", "3", "--snr", "-5", "--duration", "1", "--delays", "0,2.5,-3",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(lines[0]["delays"], serde_json::json!([0.0, 2.5, -3.0]));
    assert!((lines[0]["measured_snr_db"].as_f64().unwrap() + 5.0).abs() < 0.1);
    assert_eq!(load_wav(out.join("noisy.wav")).unwrap().num_channels(), 3);
    assert_eq!(load_wav(out.join("clean.wav")).unwrap().num_channels(), 1);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta, lines[0]);
}

#[test]
fn make_reference_aligns_a_late_close_mic() {
    let dir = tempfile::tempdir().unwrap();
    let scene = maskfuse_core::scene::synth_scene(&maskfuse_core::scene::SceneConfig::new(
        6,
        4,
        0.0,
        3.0,
        maskfuse_core::scene::NoiseKind::Diffuse,
    ))
    .unwrap();
    let mut close = vec![0.0; 40];
    close.extend_from_slice(scene.images.channel(0));
    close.truncate(scene.noisy.len());
    let (array, close_path, out) = (dir.path().join("a.wav"), dir.path().join("c.wav"), dir.path().join("r.wav"));
    save_wav(&scene.noisy, &array).unwrap();
    save_wav(&Waveform::mono(close, 16000).unwrap(), &close_path).unwrap();
    let lines = run_lines(&[
        "make-reference", "--array", array.to_str().unwrap(), "--close", close_path.to_str().unwrap(), "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(lines[0]["lag"], -40);
    assert_eq!(load_wav(&out).unwrap().len(), scene.noisy.len());
}

#[test]
fn gen_weights_matches_the_library_generator() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.mnw1");
    run_lines(&["gen-weights", "--seed", "3", "--hidden", "4", "--freq-bins", "9", "--out", path.to_str().unwrap()]);
    assert_eq!(maskfuse::mnw1::load_weights(&path).unwrap(), maskfuse_core::NetWeights::synthetic(3, 4, 9));
}

#[test]
fn help_is_printed_not_an_error() {
    let mut out = Vec::new();
    run(["maskfuse", "--help"], &mut out).unwrap();
    assert!(String::from_utf8(out).unwrap().contains("enhance"));
}
