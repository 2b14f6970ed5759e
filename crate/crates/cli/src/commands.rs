//! Command implementations.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use streamvox::codec::{
    read_tokens, synthetic_tones, write_tokens, CodecModel, CodecTrainer, TokenFile,
};
use streamvox::config::RunConfig;
use streamvox::dsp::wav::{read_wav, write_wav, WavEncoding};
use streamvox::dsp::{resample, AudioBuffer};
use streamvox::features::{write_features, FeatureSequence};
use streamvox::latency::{analyze_stream, bench_synthesize, LatencyReport, MockGenerator, MockSynth};
use streamvox::nn::Checkpoint;
use streamvox::rvq::{read_codebooks, write_codebooks, CodebookSet, RvqCode};
use streamvox::tts::{
    read_event_log, synthesize, tokenize, write_event_log, CodecStreamer, Session, SimClock, TrainingPair,
    TtsModel, TtsTrainer,
};
use streamvox::tts::MonotonicClock;
use streamvox::Error;

use crate::{CodecCommand, Command, Failure, Global, TtsCommand};

type Outcome = std::result::Result<(), Failure>;

const CODEC_CHECKPOINT: &str = "codec.ckpt";
const CODEBOOKS: &str = "codebooks.afcb";
const TTS_CHECKPOINT: &str = "tts.ckpt";
const PANGRAM: &str = "the quick brown fox jumps over the lazy dog. ";

pub fn run(global: &Global, command: Command) -> Outcome {
    let config = effective_config(global)?;
    fs::create_dir_all(&global.out).map_err(Error::from)?;
    config.save(global.out.join("config.json"))?;
    match command {
        Command::Codec(CodecCommand::Train { data }) => codec_train(global, &config, data.as_deref()),
        Command::Codec(CodecCommand::Encode { input, output, model }) => codec_encode(&input, &output, &model),
        Command::Codec(CodecCommand::Decode { input, output, model }) => codec_decode(&input, &output, &model),
        Command::Tts(TtsCommand::Train { codec, manifest }) => tts_train(global, &config, &codec, manifest.as_deref()),
        Command::Tts(TtsCommand::Synth {
            text,
            codec,
            tts,
            temperature,
        }) => tts_synth(global, &config, &text, &codec, &tts, temperature),
        Command::Features { input, output } => features(global, &config, &input, &output),
        Command::Bench {
            codec,
            tts,
            mock,
            replay,
            text,
        } => bench(global, &config, codec, tts, mock, replay, text),
    }
}

fn effective_config(global: &Global) -> Result<RunConfig, Failure> {
    let mut config = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn require(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::missing(&format!("{what} at {}", path.display())))
    }
}

fn load_codec(dir: &Path) -> Result<(CodecModel, CodebookSet), Failure> {
    let (ck, cb) = (dir.join(CODEC_CHECKPOINT), dir.join(CODEBOOKS));
    require(&ck, "codec checkpoint")?;
    require(&cb, "codebooks")?;
    let codec = CodecModel::from_checkpoint(&Checkpoint::load(&ck)?)?;
    let books = read_codebooks(&cb)?;
    CodecStreamer::new(&codec, &books)?;
    Ok((codec, books))
}

fn load_tts(path: &Path) -> Result<TtsModel, Failure> {
    let path = if path.is_dir() { path.join(TTS_CHECKPOINT) } else { path.to_path_buf() };
    require(&path, "TTS checkpoint")?;
    Ok(TtsModel::from_checkpoint(&Checkpoint::load(&path)?)?)
}

fn read_at_rate(path: &Path, rate: u32) -> Result<AudioBuffer, Failure> {
    let audio = read_wav(path)?;
    Ok(if audio.sample_rate() == rate { audio } else { resample(&audio, rate)? })
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value"));
}

fn codec_train(global: &Global, config: &RunConfig, data: Option<&Path>) -> Outcome {
    let rate = config.codec.model.sample_rate;
    let clips = match data {
        Some(dir) => {
            let mut paths: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(Error::from)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            paths.sort();
            paths.iter().map(|p| read_at_rate(p, rate)).collect::<Result<Vec<_>, _>>()?
        }
        None => synthetic_tones(
            config.codec.synthetic_clips,
            (config.codec.synthetic_seconds * rate as f64).round() as usize,
            rate,
            config.seed,
        )?,
    };
    if clips.is_empty() {
        return Err(Error::EmptyInput.into());
    }
    let train = config.codec_train();
    let model = CodecModel::new(config.codec.model.clone(), &mut ChaCha8Rng::seed_from_u64(config.seed))?;
    let mut trainer = CodecTrainer::new(model, train.clone())?.with_optimizer(config.adam(train.lr));
    let eval = &clips[..clips.len().min(16)];
    let quiet = global.json;
    let (books, report) = trainer.train(&clips, eval, |s, l| {
        if !quiet {
            println!("step={s} loss={l:.6}");
        }
    })?;
    trainer.model.to_checkpoint().save(global.out.join(CODEC_CHECKPOINT))?;
    write_codebooks(global.out.join(CODEBOOKS), &books)?;
    let ratio = report.final_eval / report.initial_eval;
    if global.json {
        print_json(&json!({
            "losses": report.losses,
            "initial_eval": report.initial_eval,
            "final_eval": report.final_eval,
            "ratio": ratio,
            "residual_mse": report.codebooks.residual_mse,
        }));
    } else {
        println!("initial_eval={:.6}", report.initial_eval);
        println!("final_eval={:.6}", report.final_eval);
        println!("ratio={ratio:.6}");
    }
    Ok(())
}

fn codec_encode(input: &Path, output: &Path, model: &Path) -> Outcome {
    let (codec, books) = load_codec(model)?;
    let audio = read_at_rate(input, codec.config().sample_rate)?;
    let codes = codec.quantize(&codec.encode(&audio)?, &books)?;
    println!("frames={}", codes.len());
    write_tokens(
        output,
        &TokenFile {
            sample_rate: codec.config().sample_rate,
            levels: books.levels(),
            entries: books.entries(),
            codes,
        },
    )?;
    Ok(())
}

fn codec_decode(input: &Path, output: &Path, model: &Path) -> Outcome {
    let tokens = read_tokens(input)?;
    let (codec, books) = load_codec(model)?;
    if (tokens.levels, tokens.entries, tokens.sample_rate) != (books.levels(), books.entries(), codec.config().sample_rate)
    {
        return Err(Error::ConfigMismatch(format!(
            "token file is L={} K={} at {} Hz, codec is L={} K={} at {} Hz",
            tokens.levels,
            tokens.entries,
            tokens.sample_rate,
            books.levels(),
            books.entries(),
            codec.config().sample_rate
        ))
        .into());
    }
    let audio = codec.decode(&tokens.codes, &books)?;
    println!("samples={}", audio.len());
    write_wav(output, &audio, WavEncoding::Float32)?;
    Ok(())
}

/// Five short phrases, each paired with a tone lasting one codec frame per byte.
fn synthetic_pairs(codec: &CodecModel, books: &CodebookSet) -> Result<Vec<TrainingPair>, Failure> {
    let c = codec.config();
    ["do", "re mi", "fa so", "la ti do", "hello"]
        .iter()
        .enumerate()
        .map(|(i, phrase)| {
            let text = tokenize(phrase);
            let freq = 220.0 * 2f64.powf(i as f64 / 5.0);
            let audio = AudioBuffer::tone(freq, 0.3, 0.0, text.len() * c.compression(), c.sample_rate)?;
            let codes = codec.quantize(&codec.encode(&audio)?, books)?;
            Ok((text, codes))
        })
        .collect()
}

fn manifest_pairs(path: &Path, codec: &CodecModel, books: &CodebookSet) -> Result<Vec<TrainingPair>, Failure> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for (n, line) in fs::read_to_string(path).map_err(Error::from)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (text, wav) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("manifest line {} lacks a tab", n + 1)))?;
        let audio = read_at_rate(&base.join(wav.trim()), codec.config().sample_rate)?;
        let mut codes: Vec<RvqCode> = codec.quantize(&codec.encode(&audio)?, books)?;
        let mut text = tokenize(text);
        let len = text.len().min(codes.len());
        text.truncate(len);
        codes.truncate(len);
        if len > 0 {
            pairs.push((text, codes));
        }
    }
    Ok(pairs)
}

fn tts_train(global: &Global, config: &RunConfig, codec_dir: &Path, manifest: Option<&Path>) -> Outcome {
    let (codec, books) = load_codec(codec_dir)?;
    config.tts.model.check_codebooks(&books)?;
    let pairs = match manifest {
        Some(m) => manifest_pairs(m, &codec, &books)?,
        None => synthetic_pairs(&codec, &books)?,
    };
    if pairs.is_empty() {
        return Err(Error::EmptyInput.into());
    }
    let train = config.tts_train();
    let model = TtsModel::new(config.tts.model.clone(), &mut ChaCha8Rng::seed_from_u64(config.seed))?;
    let mut trainer = TtsTrainer::new(model, &books, &train)?.with_optimizer(config.adam(train.lr));
    let ckpt = global.out.join(TTS_CHECKPOINT);
    let initial = trainer.evaluate(&pairs)?;
    let mut losses = Vec::with_capacity(train.steps);
    for s in 0..train.steps {
        let l = trainer.step(&pairs)?;
        losses.push(l);
        if !global.json {
            println!("step={s} loss={l:.6}");
        }
        let every = config.tts.checkpoint_every;
        if every > 0 && (s + 1) % every == 0 {
            trainer.model.to_checkpoint().save(&ckpt)?;
        }
    }
    trainer.model.to_checkpoint().save(&ckpt)?;
    let last = trainer.evaluate(&pairs)?;
    let reduction = (initial - last) / initial.abs();
    if global.json {
        print_json(&json!({ "losses": losses, "initial_eval": initial, "final_eval": last, "reduction": reduction }));
    } else {
        println!("initial_eval={initial:.6}");
        println!("final_eval={last:.6}");
        println!("reduction={reduction:.6}");
    }
    Ok(())
}

fn tts_synth(
    global: &Global,
    config: &RunConfig,
    text: &str,
    codec_dir: &Path,
    tts: &Path,
    temperature: Option<f64>,
) -> Outcome {
    let (codec, books) = load_codec(codec_dir)?;
    let model = load_tts(tts)?;
    let mut session = Session::new(&model, &books, config.seed)?;
    if let Some(t) = temperature {
        session = session.with_temperature(t)?;
    }
    let mut streamer = CodecStreamer::new(&codec, &books)?;
    let out = synthesize(&tokenize(text), &mut session, &mut streamer, &MonotonicClock::new())?;
    write_wav(global.out.join("synth.wav"), &out.audio, WavEncoding::Float32)?;
    write_event_log(global.out.join("events.log"), &out.events)?;
    if global.json {
        print_json(&json!({ "tokens": out.codes.len(), "samples": out.audio.len() }));
    } else {
        println!("tokens={}", out.codes.len());
        println!("samples={}", out.audio.len());
    }
    Ok(())
}

fn features(global: &Global, config: &RunConfig, input: &Path, output: &Path) -> Outcome {
    let audio = read_wav(input)?;
    let pipeline = config.feature_pipeline(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let report = pipeline.run(&audio)?;
    let mut data = Vec::new();
    let mut dim = config.features.adaptor_width;
    let mut rate = 0;
    for w in &report.windows {
        data.extend_from_slice(w.tokens.data());
        dim = w.tokens.dim();
        rate = w.tokens.frame_rate();
    }
    write_features(output, &FeatureSequence::new(data, dim, rate)?)?;
    if global.json {
        let windows: Vec<_> = report
            .windows
            .iter()
            .map(|w| {
                json!({
                    "index": w.index,
                    "mel": w.counts.mel, "stem": w.counts.stem, "pooled": w.counts.pooled,
                    "valid_mel": w.valid.mel, "valid_stem": w.valid.stem, "valid_pooled": w.valid.pooled,
                })
            })
            .collect();
        print_json(&json!({ "windows": windows, "truncated_samples": report.truncated_samples }));
    } else {
        println!("windows={}", report.windows.len());
        println!("truncated_samples={}", report.truncated_samples);
        for w in &report.windows {
            println!(
                "window={} mel={} stem={} pooled={} valid_mel={} valid_stem={} valid_pooled={}",
                w.index, w.counts.mel, w.counts.stem, w.counts.pooled, w.valid.mel, w.valid.stem, w.valid.pooled
            );
        }
    }
    Ok(())
}

fn bench_text(config: &RunConfig, text: Option<String>) -> Vec<u32> {
    match text {
        Some(t) => tokenize(&t),
        None => tokenize(&PANGRAM.repeat(config.bench.tokens / PANGRAM.len() + 1)[..config.bench.tokens]),
    }
}

fn emit_report(global: &Global, report: &LatencyReport) -> Outcome {
    let json = report.to_json()?;
    fs::write(global.out.join("report.json"), format!("{json}\n")).map_err(Error::from)?;
    if global.json {
        println!("{json}");
    } else {
        println!("{}", report.to_key_value());
    }
    Ok(())
}

fn bench(
    global: &Global,
    config: &RunConfig,
    codec: Option<PathBuf>,
    tts: Option<PathBuf>,
    mock: bool,
    replay: Option<PathBuf>,
    text: Option<String>,
) -> Outcome {
    if let Some(log) = replay {
        let events = read_event_log(&log)?;
        return emit_report(global, &analyze_stream(&events)?);
    }
    let text = bench_text(config, text);
    let (report, events) = if mock {
        let clock = SimClock::new(0);
        let mut generator = MockGenerator {
            clock: clock.clone(),
            step_ns: config.bench.mock_step_ns,
            levels: config.tts.model.levels,
        };
        let mut synth = MockSynth {
            clock: clock.clone(),
            synth_ns: config.bench.mock_synth_ns,
            chunk: config.codec.model.compression(),
            sample_rate: config.codec.model.sample_rate,
        };
        let (r, out) = bench_synthesize(&text, &mut generator, &mut synth, &clock)?;
        (r, out.events)
    } else {
        let codec_dir = codec.ok_or_else(|| Failure::missing("--codec directory (or pass --mock)"))?;
        let tts = tts.ok_or_else(|| Failure::missing("--tts checkpoint (or pass --mock)"))?;
        let (codec, books) = load_codec(&codec_dir)?;
        let model = load_tts(&tts)?;
        let mut session = Session::new(&model, &books, config.seed)?;
        let mut streamer = CodecStreamer::new(&codec, &books)?;
        let (r, out) = bench_synthesize(&text, &mut session, &mut streamer, &MonotonicClock::new())?;
        (r, out.events)
    };
    write_event_log(global.out.join("events.log"), &events)?;
    emit_report(global, &report)
}
