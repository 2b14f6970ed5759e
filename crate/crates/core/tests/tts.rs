use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use streamvox::codec::{CodecConfig, CodecModel};
use streamvox::dsp::AudioBuffer;
use streamvox::nn::{mog_nll, Graph, MoGParams, MogHead, MogHeadConfig, ParamStore, Tensor};
use streamvox::rvq::{CodebookSet, RvqCode};
use streamvox::tts::*;
use streamvox::Error;

fn books(cfg: &TtsConfig, seed: u64) -> CodebookSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cw = Vec::with_capacity(cfg.levels * cfg.entries * cfg.dim);
    for l in 0..cfg.levels {
        for _ in 0..cfg.entries * cfg.dim {
            let v: f64 = StandardNormal.sample(&mut rng);
            cw.push((v * 0.5f64.powi(l as i32)) as f32);
        }
    }
    CodebookSet::new(cfg.levels, cfg.entries, cfg.dim, cw).unwrap()
}

fn model(seed: u64) -> TtsModel {
    TtsModel::new(TtsConfig::toy(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random_codes(n: usize, cfg: &TtsConfig, rng: &mut impl Rng) -> Vec<RvqCode> {
    (0..n)
        .map(|_| RvqCode::new((0..cfg.levels).map(|_| rng.random_range(0..cfg.entries)).collect()))
        .collect()
}

#[test]
fn one_audio_token_per_text_token() {
    let m = model(0);
    let b = books(m.config(), 1);
    let mut s = Session::new(&m, &b, 3).unwrap();
    for (i, t) in tokenize("hello").into_iter().enumerate() {
        let code = s.step(t).unwrap();
        assert_eq!(code.levels(), 8);
        b.validate(&code).unwrap();
        assert_eq!((s.consumed(), s.emitted()), (i + 1, i + 1));
        // text and audio positions, minus the audio token not yet fed back
        assert_eq!(s.context_len(), 2 * (i + 1) - 1);
    }
}

#[test]
fn sessions_are_seeded() {
    let m = model(0);
    let b = books(m.config(), 1);
    let run = |seed| {
        let mut s = Session::new(&m, &b, seed).unwrap();
        tokenize("seeded run").into_iter().map(|t| s.step(t).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

#[test]
fn closed_session_rejects_steps() {
    let m = model(0);
    let b = books(m.config(), 1);
    let mut s = Session::new(&m, &b, 0).unwrap();
    s.step(b'a' as u32).unwrap();
    s.close();
    assert!(matches!(s.step(b'b' as u32), Err(Error::SessionClosed)));
    assert_eq!((s.consumed(), s.emitted()), (1, 1));
}

#[test]
fn out_of_vocabulary_token_is_rejected() {
    let m = model(0);
    let b = books(m.config(), 1);
    let mut s = Session::new(&m, &b, 0).unwrap();
    assert!(s.step(VOCAB_SIZE as u32).is_err());
}

#[test]
fn mismatched_codebooks_are_rejected() {
    let m = model(0);
    let mut cfg = m.config().clone();
    cfg.dim = 16;
    let wrong = books(&cfg, 1);
    assert!(matches!(Session::new(&m, &wrong, 0), Err(Error::ConfigMismatch(_))));
    assert!(matches!(
        TtsTrainer::new(m.clone(), &wrong, &TtsTrainConfig::default()),
        Err(Error::ConfigMismatch(_))
    ));
    let codec = CodecModel::new(CodecConfig::toy(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(matches!(CodecStreamer::new(&codec, &wrong), Err(Error::ConfigMismatch(_))));
    cfg = m.config().clone();
    cfg.entries = 32;
    assert!(matches!(Session::new(&m, &books(&cfg, 1), 0), Err(Error::ConfigMismatch(_))));
}

#[test]
fn next_prediction_depends_on_audio_history() {
    let m = model(2);
    let b = books(m.config(), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let text = tokenize("ab");
    let codes = random_codes(2, m.config(), &mut rng);
    let mut forced = codes.clone();
    forced[0] = RvqCode::new(codes[0].indices.iter().map(|&i| (i + 1) % 64).collect());
    let a = m.head_params(&text, &codes, &b, &[0, 0]).unwrap();
    let f = m.head_params(&text, &forced, &b, &[0, 0]).unwrap();
    // position 0 sees only its text token; position 1 sees audio token 0
    assert_eq!(a[0], f[0]);
    let diff = a[1].means.iter().zip(&f[1].means).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff > 1e-4, "max mean change {diff}");
}

#[test]
fn unmasking_commits_in_groups_and_never_revises() {
    let m = model(4);
    let b = books(m.config(), 1);
    let mut s = Session::new(&m, &b, 11).unwrap();
    for t in tokenize("levels") {
        let trace = s.step_traced(t).unwrap();
        assert_eq!(trace.committed, vec![2, 4, 6, 8]);
        for w in trace.snapshots.windows(2) {
            for (before, after) in w[0].iter().zip(&w[1]) {
                if let Some(x) = before {
                    assert_eq!(Some(x), after.as_ref());
                }
            }
        }
        let last: Vec<usize> = trace.snapshots.last().unwrap().iter().map(|v| v.unwrap()).collect();
        assert_eq!(last, trace.code.indices);
    }
}

#[test]
fn greedy_single_mixture_equals_encoding_its_mean() {
    let cfg = TtsConfig::toy();
    let b = books(&cfg, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let head_cfg = MogHeadConfig {
        mixtures: 1,
        dim: cfg.dim,
        hidden: 32,
    };
    let width = 16;
    let mut store = ParamStore::<f32>::new();
    let head = MogHead::new(head_cfg, width, &mut store, "head", &mut rng);
    // cut the path from committed levels so the mean is fixed across iterations
    let w0 = store.id("head.fc0.weight").unwrap();
    store.get_mut(w0).data_mut()[width * 32..].fill(0.0);
    let hidden = Tensor::new(vec![1, width], (0..width).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap();
    let g = Graph::inference();
    let p = store.bind(&g, false);
    let out = head
        .forward(&p, g.constant(hidden.clone()), g.constant(Tensor::zeros(&[1, cfg.dim])))
        .unwrap();
    let mu: Vec<f32> = out.params(0, &head_cfg).mean(0).iter().map(|&v| v as f32).collect();
    let expected = b.encode(&mu).unwrap();
    for steps in [1, 2, 4, 8] {
        let schedule = UnmaskSchedule::new(cfg.levels, steps).unwrap();
        let trace = iterative_unmask(&head, &store, &hidden, &b, &schedule, 0.0, &mut rng).unwrap();
        assert_eq!(trace.code, expected, "steps {steps}");
    }
}

#[test]
fn floor_variance_at_target_gives_closed_form_nll() {
    let d = 24;
    let target: Vec<f64> = (0..d).map(|i| (i as f64 * 0.1).cos()).collect();
    let floor = 1e-4f64;
    let p = MoGParams::new(1, d, vec![0.0], target.clone(), vec![floor.ln(); d]).unwrap();
    let bound = 0.5 * d as f64 * ((2.0 * std::f64::consts::PI).ln() + floor.ln());
    assert!((mog_nll(&p, &target).unwrap() - bound).abs() < 1e-9);
    assert!((bound - (-88.4696)).abs() < 1e-3);
}

#[test]
fn loss_requires_matching_lengths() {
    let m = model(0);
    let b = books(m.config(), 1);
    let codes = random_codes(3, m.config(), &mut ChaCha8Rng::seed_from_u64(0));
    let r = m.teacher_forced_loss(&tokenize("ab"), &codes, &b, &[0, 0, 0]);
    assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    let r = m.teacher_forced_loss(&tokenize("abc"), &codes, &b, &[0, 0]);
    assert!(matches!(r, Err(Error::ShapeMismatch(_))));
}

#[test]
fn mean_loss_ignores_pair_order() {
    let m = model(0);
    let b = books(m.config(), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pairs: Vec<TrainingPair> = (0..4)
        .map(|i| (tokenize(&"xyzw"[..i + 1]), random_codes(i + 1, m.config(), &mut rng)))
        .collect();
    let a = evaluate(&m, &b, &pairs).unwrap();
    pairs.reverse();
    pairs.swap(0, 2);
    let c = evaluate(&m, &b, &pairs).unwrap();
    assert!((a - c).abs() < 1e-9 * a.abs());
}

#[test]
fn training_reduces_loss_on_fixed_pairs() {
    let m = model(0);
    let b = books(m.config(), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs: Vec<TrainingPair> = (0..3)
        .map(|_| {
            let text: Vec<u32> = (0..6).map(|_| rng.random_range(97..123)).collect();
            (text, random_codes(6, m.config(), &mut rng))
        })
        .collect();
    let mut tr = TtsTrainer::new(m, &b, &TtsTrainConfig::default()).unwrap();
    let before = tr.evaluate(&pairs).unwrap();
    for _ in 0..40 {
        tr.step(&pairs).unwrap();
    }
    assert!(tr.evaluate(&pairs).unwrap() < before);
}

#[test]
fn checkpoint_round_trip() {
    let m = model(6);
    let b = books(m.config(), 1);
    let mut buf = Vec::new();
    m.to_checkpoint().write_to(&mut buf).unwrap();
    let back = TtsModel::from_checkpoint(&streamvox::nn::Checkpoint::read_from(&buf[..]).unwrap()).unwrap();
    assert_eq!(back.config(), m.config());
    let codes = random_codes(3, m.config(), &mut ChaCha8Rng::seed_from_u64(0));
    let text = tokenize("abc");
    assert_eq!(
        m.teacher_forced_loss(&text, &codes, &b, &[0, 2, 4]).unwrap(),
        back.teacher_forced_loss(&text, &codes, &b, &[0, 2, 4]).unwrap()
    );
    let codec = CodecModel::new(CodecConfig::toy(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(matches!(TtsModel::from_checkpoint(&codec.to_checkpoint()), Err(Error::ConfigMismatch(_))));
}

fn synth_once(text: &str, seed: u64) -> Synthesis {
    let m = model(0);
    let b = books(m.config(), 1);
    let codec = CodecModel::new(CodecConfig::toy(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut session = Session::new(&m, &b, seed).unwrap();
    let mut streamer = CodecStreamer::new(&codec, &b).unwrap();
    synthesize(&tokenize(text), &mut session, &mut streamer, &MonotonicClock::new()).unwrap()
}

#[test]
fn synthesis_emits_a_chunk_per_token() {
    let out = synth_once("hello", 1);
    assert_eq!(out.audio.len(), 5 * 4096);
    assert_eq!(out.audio.sample_rate(), 44_100);
    assert_eq!(out.codes.len(), 5);
    assert_eq!(out.events.len(), 10);
    for (i, pair) in out.events.chunks(2).enumerate() {
        assert_eq!((pair[0].kind, pair[0].index), (TokenKind::Text, i));
        assert_eq!((pair[1].kind, pair[1].index), (TokenKind::Audio, i));
        assert!(pair[1].synth_ns.is_some());
    }
    assert!(out.events.windows(2).all(|w| w[0].timestamp_ns <= w[1].timestamp_ns));
}

#[test]
fn synthesis_is_deterministic_per_seed() {
    let a = synth_once("same", 4);
    let b = synth_once("same", 4);
    assert_eq!(a.audio, b.audio);
    assert_eq!(a.codes, b.codes);
}

#[test]
fn empty_text_gives_empty_audio() {
    let out = synth_once("", 0);
    assert!(out.audio.is_empty());
    assert!(out.events.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_partitions_levels(levels in 1usize..120, steps_frac in 0.0f64..1.0) {
        let steps = 1 + ((levels - 1) as f64 * steps_frac) as usize;
        let s = UnmaskSchedule::new(levels, steps).unwrap();
        let g = s.groups();
        prop_assert_eq!(g.len(), steps);
        prop_assert_eq!(g[0].start, 0);
        prop_assert_eq!(g[g.len() - 1].end, levels);
        for w in g.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].len() >= w[1].len());
        }
        let sizes: Vec<usize> = g.iter().map(|r| r.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert!(sizes.iter().all(|&n| n >= 1));
    }

    #[test]
    fn event_log_round_trips(raw in proptest::collection::vec((any::<bool>(), 0usize..1000, any::<u64>(), proptest::option::of(any::<u64>())), 0..40)) {
        let events: Vec<TokenEvent> = raw.into_iter().map(|(audio, index, ts, synth)| TokenEvent {
            kind: if audio { TokenKind::Audio } else { TokenKind::Text },
            index,
            timestamp_ns: ts,
            synth_ns: synth,
        }).collect();
        let mut buf = Vec::new();
        write_event_log_to(&mut buf, &events).unwrap();
        prop_assert_eq!(read_event_log_from(&buf[..]).unwrap(), events);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn interleaving_holds_after_every_step(text in proptest::collection::vec(0u32..256, 1..24), seed in any::<u64>()) {
        let m = model(0);
        let b = books(m.config(), 1);
        let mut s = Session::new(&m, &b, seed).unwrap();
        for &t in &text {
            s.step(t).unwrap();
            prop_assert_eq!(s.consumed(), s.emitted());
        }
        prop_assert_eq!(s.emitted(), text.len());
    }
}

fn segment(speaker: u32, seconds: f64, rate: u32) -> Segment {
    Segment {
        speaker,
        audio: AudioBuffer::silence((seconds * rate as f64).round() as usize, rate).unwrap(),
    }
}

#[test]
fn one_segment_reaching_the_target_is_used_alone() {
    let seg = vec![segment(1, 3.0, 1000)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut seen = 0;
    for _ in 0..2000 {
        let s = build_training_sample(&seg, &mut rng).unwrap();
        if s.target_seconds <= 3.0 {
            assert_eq!(s.segments, vec![0]);
            assert_eq!(s.audio.len(), 3000);
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn sample_durations_stay_within_bounds() {
    let rate = 100;
    let segs: Vec<Segment> = [0.5, 1.25, 2.0, 3.5].iter().map(|&d| segment(7, d, rate)).collect();
    let max_seg = 3.5;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut lo, mut hi) = (f64::INFINITY, 0f64);
    for _ in 0..10_000 {
        let s = build_training_sample(&segs, &mut rng).unwrap();
        let d = s.audio.duration_seconds();
        assert!(d >= s.target_seconds - 1e-9);
        assert!((1.0..=120.0 + max_seg).contains(&d), "duration {d}");
        assert!((1.0..=120.0).contains(&s.target_seconds));
        assert_eq!(s.speaker, 7);
        lo = lo.min(s.target_seconds);
        hi = hi.max(s.target_seconds);
    }
    assert!(lo < 2.0 && hi > 119.0, "targets span [{lo}, {hi}]");
}

#[test]
fn mixed_speakers_are_rejected() {
    let segs = vec![segment(1, 1.0, 100), segment(2, 1.0, 100)];
    let r = build_training_sample(&segs, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(r, Err(Error::SpeakerMismatch)));
    assert!(matches!(
        build_training_sample(&[], &mut ChaCha8Rng::seed_from_u64(0)),
        Err(Error::EmptyInput)
    ));
}
