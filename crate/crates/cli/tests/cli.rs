use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use streamvox::dsp::wav::{read_wav, write_wav, WavEncoding};
use streamvox::dsp::AudioBuffer;

const SMALL: &str = r#"{
    "codec": {
        "train": { "steps": 3, "batch": 1, "clip_samples": 4096, "rvq_iterations": 2 },
        "synthetic_clips": 64,
        "synthetic_seconds": 0.2
    },
    "tts": { "train": { "steps": 3 }, "checkpoint_every": 2 }
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_streamvox"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(&o), String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A codec and TTS model trained for a few steps, shared by the tests below.
fn models() -> &'static (tempfile::TempDir, PathBuf, PathBuf, PathBuf) {
    static MODELS: OnceLock<(tempfile::TempDir, PathBuf, PathBuf, PathBuf)> = OnceLock::new();
    MODELS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("small.json");
        std::fs::write(&config, SMALL).unwrap();
        let codec = dir.path().join("codec");
        let tts = dir.path().join("tts");
        ok(run(&["codec", "train", "--config", s(&config), "--out", s(&codec)]));
        ok(run(&["tts", "train", "--codec", s(&codec), "--config", s(&config), "--out", s(&tts)]));
        (dir, config, codec, tts)
    })
}

#[test]
fn codec_round_trip_keeps_whole_frames() {
    let (dir, _, codec, _) = models();
    let wav = dir.path().join("one_second.wav");
    write_wav(&wav, &AudioBuffer::tone(330.0, 0.3, 0.0, 44_100, 44_100).unwrap(), WavEncoding::Pcm16).unwrap();
    let tokens = dir.path().join("one_second.afrq");
    let back = dir.path().join("decoded.wav");
    let out = ok(run(&["codec", "encode", s(&wav), s(&tokens), "--model", s(codec), "--out", s(&dir.path().join("o1"))]));
    assert_eq!(value(&out, "frames"), "11");
    let out = ok(run(&["codec", "decode", s(&tokens), s(&back), "--model", s(codec), "--out", s(&dir.path().join("o2"))]));
    assert_eq!(value(&out, "samples"), "45056");
    assert_eq!(read_wav(&back).unwrap().len(), 45_056);
}

#[test]
fn wrong_magic_exits_with_format_status() {
    let (dir, _, codec, _) = models();
    let bogus = dir.path().join("bogus.afrq");
    std::fs::write(&bogus, b"AFCB\x01\x00garbage-garbage-garbage").unwrap();
    let o = run(&["codec", "decode", s(&bogus), s(&dir.path().join("x.wav")), "--model", s(codec), "--out", s(&dir.path().join("o3"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn training_writes_artifacts_and_reloadable_config() {
    let (_, _, codec, tts) = models();
    for f in ["codec.ckpt", "codebooks.afcb", "config.json"] {
        assert!(codec.join(f).exists(), "{f}");
    }
    assert!(tts.join("tts.ckpt").exists());
    let echoed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(codec.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["codec"]["train"]["steps"], 3);
    assert_eq!(echoed["rvq"]["paper_value"]["levels"], 72);
    assert_eq!(echoed["seed"], 0);
}

#[test]
fn synthesis_is_sized_and_reproducible() {
    let (dir, config, codec, tts) = models();
    let synth = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = ok(run(&["tts", "synth", "hello", "--codec", s(codec), "--tts", s(tts), "--seed", "7", "--config", s(config), "--out", s(&out_dir)]));
        assert_eq!(value(&out, "samples"), (5 * 4096).to_string());
        (std::fs::read(out_dir.join("synth.wav")).unwrap(), out_dir)
    };
    let (a, a_dir) = synth("s1");
    let (b, _) = synth("s2");
    assert_eq!(a, b);
    assert_eq!(read_wav(a_dir.join("synth.wav")).unwrap().len(), 5 * 4096);
    let log = std::fs::read_to_string(a_dir.join("events.log")).unwrap();
    assert_eq!(log.lines().count(), 10);
}

#[test]
fn mismatched_codebook_dims_exit_with_config_status() {
    let (dir, _, codec, _) = models();
    let cfg = dir.path().join("mismatch.json");
    let mut v: serde_json::Value = serde_json::from_str(SMALL).unwrap();
    v["tts"]["model"] = serde_json::to_value(streamvox::tts::TtsConfig { dim: 16, ..streamvox::tts::TtsConfig::toy() }).unwrap();
    std::fs::write(&cfg, v.to_string()).unwrap();
    let o = run(&["tts", "train", "--codec", s(codec), "--config", s(&cfg), "--out", s(&dir.path().join("o4"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn live_bench_runs_on_trained_models() {
    let (dir, config, codec, tts) = models();
    let out = ok(run(&["bench", "--codec", s(codec), "--tts", s(tts), "--text", "abc", "--config", s(config), "--out", s(&dir.path().join("b0"))]));
    assert_eq!(value(&out, "audio_tokens"), "3");
}

#[test]
fn mock_bench_reports_analytic_values_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let live_dir = dir.path().join("live");
    let out = ok(run(&["bench", "--mock", "--out", s(&live_dir)]));
    assert_eq!(value(&out, "audio_tokens"), "108");
    assert_eq!(value(&out, "ttft"), "0.01");
    assert_eq!(value(&out, "itl_mean"), "0.01");
    assert_eq!(value(&out, "token_gen_total").parse::<f64>().unwrap(), 1.08);
    assert_eq!(value(&out, "waveform_total"), "0");
    assert!((value(&out, "audio_seconds_out").parse::<f64>().unwrap() - 108.0 * 4096.0 / 44100.0).abs() < 1e-9);
    let replay = ok(run(&["bench", "--replay", s(&live_dir.join("events.log")), "--out", s(&dir.path().join("replay"))]));
    assert_eq!(replay, out);
    let json = ok(run(&["bench", "--mock", "--json", "--out", s(&dir.path().join("json"))]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["audio_tokens"], 108);
    assert_eq!(v["degenerate"], false);
}

#[test]
fn bench_without_models_or_mock_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["bench", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["bench", "--codec", s(&dir.path().join("nowhere")), "--tts", "nothing.ckpt", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"seed": 1, "tts": {"speed": 2}}"#).unwrap();
    let o = run(&["bench", "--mock", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

fn features_for(seconds: f64) -> String {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("in.wav");
    let n = (seconds * 16_000.0).round() as usize;
    write_wav(&wav, &AudioBuffer::tone(200.0, 0.2, 0.0, n, 16_000).unwrap(), WavEncoding::Pcm16).unwrap();
    let dump = dir.path().join("out.affe");
    let out = ok(run(&["features", s(&wav), s(&dump), "--out", s(&dir.path().join("o"))]));
    let feats = streamvox::features::read_features(&dump).unwrap();
    let windows: usize = value(&out, "windows").parse().unwrap();
    assert_eq!(feats.len(), 750 * windows);
    out
}

#[test]
fn thirty_seconds_gives_one_full_window() {
    let out = features_for(30.0);
    assert_eq!(value(&out, "windows"), "1");
    assert!(out.contains("window=0 mel=3000 stem=1500 pooled=750"), "{out}");
}

#[test]
fn short_audio_is_padded_to_one_window() {
    let out = features_for(0.1);
    assert_eq!(value(&out, "windows"), "1");
    assert!(out.contains("valid_mel=10 valid_stem=5 valid_pooled=2"), "{out}");
}

#[test]
fn seventy_five_seconds_gives_three_windows() {
    let out = features_for(75.0);
    assert_eq!(value(&out, "windows"), "3");
}

#[test]
fn rerun_with_echoed_config_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let a = ok(run(&["bench", "--mock", "--seed", "5", "--out", s(&first)]));
    let second = dir.path().join("second");
    let b = ok(run(&["bench", "--mock", "--config", s(&first.join("config.json")), "--out", s(&second)]));
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read(first.join("config.json")).unwrap(),
        std::fs::read(second.join("config.json")).unwrap()
    );
}
