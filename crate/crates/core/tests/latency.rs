use proptest::prelude::*;
use streamvox::latency::*;
use streamvox::tts::{read_event_log_from, synthesize, write_event_log_to, TokenEvent, TokenKind};
use streamvox::Error;

fn mocks(step_ns: u64, synth_ns: u64) -> (SimClock, MockGenerator, MockSynth) {
    let clock = SimClock::new(0);
    let generator = MockGenerator {
        clock: clock.clone(),
        step_ns,
        levels: 8,
    };
    let synth = MockSynth {
        clock: clock.clone(),
        synth_ns,
        chunk: 4096,
        sample_rate: 44_100,
    };
    (clock, generator, synth)
}

#[test]
fn reported_constants_are_recovered_exactly() {
    let events = simulated_events(108, REFERENCE_TTFT_NS, REFERENCE_ITL_NS);
    let r = analyze(&events, 0).unwrap();
    assert_eq!(r.ttft, 0.15);
    assert_eq!(r.itl_mean, Some(0.06));
    assert_eq!(r.itl_p50, Some(0.06));
    assert_eq!(r.itl_p95, Some(0.06));
    assert!((r.wall_total - 6.57).abs() < 1e-9);
    assert!((r.audio_seconds_out - 108.0 * 4096.0 / 44100.0).abs() < 1e-9);
    assert!((r.audio_seconds_out - 10.03).abs() < 5e-3);
    assert!(!r.degenerate);
}

#[test]
fn single_event_is_degenerate() {
    let events = [TokenEvent {
        kind: TokenKind::Audio,
        index: 0,
        timestamp_ns: 1_250_000_000,
        synth_ns: None,
    }];
    let r = analyze(&events, 0).unwrap();
    assert_eq!(r.ttft, 1.25);
    assert_eq!(r.wall_total, r.ttft);
    assert_eq!((r.itl_mean, r.itl_p50, r.itl_p95), (None, None, None));
    assert!(r.degenerate);
}

#[test]
fn streams_without_audio_are_rejected() {
    assert!(matches!(analyze(&[], 0), Err(Error::EmptyStream)));
    let text_only = [TokenEvent {
        kind: TokenKind::Text,
        index: 0,
        timestamp_ns: 3,
        synth_ns: None,
    }];
    assert!(matches!(analyze(&text_only, 0), Err(Error::EmptyStream)));
    let (clock, mut g, mut s) = mocks(1, 1);
    assert!(matches!(bench_synthesize(&[], &mut g, &mut s, &clock), Err(Error::EmptyStream)));
}

#[test]
fn percentiles_use_nearest_rank() {
    // gaps 10, 20, ..., 100 ms
    let mut events = Vec::new();
    let mut t = 50_000_000u64;
    for k in 0..11 {
        events.push(TokenEvent {
            kind: TokenKind::Audio,
            index: k,
            timestamp_ns: t,
            synth_ns: None,
        });
        t += (k as u64 + 1) * 10_000_000;
    }
    let r = analyze(&events, 0).unwrap();
    assert_eq!(r.itl_p50, Some(0.05));
    assert_eq!(r.itl_p95, Some(0.1));
    assert!((r.itl_mean.unwrap() - 0.055).abs() < 1e-12);
}

#[test]
fn mocked_generation_time_is_separated_from_synthesis() {
    let (clock, mut g, mut s) = mocks(10_000_000, 2_000_000);
    let text = vec![b'a' as u32; 108];
    let (r, out) = bench_synthesize(&text, &mut g, &mut s, &clock).unwrap();
    assert!((r.token_gen_total - 1.08).abs() <= 0.05 * 1.08);
    assert!((r.token_gen_total - 1.08).abs() < 1e-9);
    assert!((r.waveform_total - 0.216).abs() < 1e-9);
    assert!((r.ttft - 0.012).abs() < 1e-12);
    assert!((r.itl_mean.unwrap() - 0.012).abs() < 1e-12);
    assert!((r.wall_total - 108.0 * 0.012).abs() < 1e-9);
    assert_eq!(out.audio.len(), 108 * 4096);
    assert!((r.audio_seconds_out - 108.0 * 4096.0 / 44100.0).abs() < 1e-9);
}

#[test]
fn first_audio_latency_is_independent_of_text_length() {
    let ttfts: Vec<f64> = [1usize, 10, 200]
        .iter()
        .map(|&n| {
            let (clock, mut g, mut s) = mocks(7_000_000, 3_000_000);
            bench_synthesize(&vec![1; n], &mut g, &mut s, &clock).unwrap().0.ttft
        })
        .collect();
    assert!(ttfts.iter().all(|&t| t == 0.01), "{ttfts:?}");
}

#[test]
fn replayed_log_gives_the_same_report() {
    let (clock, mut g, mut s) = mocks(9_000_000, 1_000_000);
    clock.set(1_000);
    let t0 = clock.now_ns();
    let out = synthesize(&vec![3; 20], &mut g, &mut s, &clock).unwrap();
    let live = analyze(&out.events, t0).unwrap();
    let mut buf = Vec::new();
    write_event_log_to(&mut buf, &out.events).unwrap();
    let replayed = analyze(&read_event_log_from(&buf[..]).unwrap(), t0).unwrap();
    assert_eq!(live, replayed);
    assert_eq!(analyze_stream(&read_event_log_from(&buf[..]).unwrap()).unwrap(), live);
    assert_eq!(live.to_key_value(), replayed.to_key_value());
}

#[test]
fn report_formats() {
    let r = analyze(&simulated_events(3, 100, 10), 0).unwrap();
    let kv = r.to_key_value();
    let keys: Vec<&str> = kv.lines().map(|l| l.split('=').next().unwrap()).collect();
    assert_eq!(
        keys,
        [
            "audio_tokens",
            "ttft",
            "itl_mean",
            "itl_p50",
            "itl_p95",
            "token_gen_total",
            "waveform_total",
            "audio_seconds_out",
            "wall_total",
            "degenerate"
        ]
    );
    let back: LatencyReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
}

fn stream() -> impl Strategy<Value = (u64, Vec<u64>)> {
    (0u64..1_000_000_000, proptest::collection::vec(0u64..500_000_000, 1..60))
}

fn events_from(t0: u64, gaps: &[u64]) -> Vec<TokenEvent> {
    let mut t = t0;
    let mut events = Vec::new();
    for (k, g) in gaps.iter().enumerate() {
        events.push(TokenEvent {
            kind: TokenKind::Text,
            index: k,
            timestamp_ns: t,
            synth_ns: None,
        });
        t += g;
        events.push(TokenEvent {
            kind: TokenKind::Audio,
            index: k,
            timestamp_ns: t,
            synth_ns: Some(g / 3),
        });
    }
    events
}

proptest! {
    #[test]
    fn intervals_and_ttft_sum_to_the_last_audio_time((t0, gaps) in stream()) {
        let events = events_from(t0, &gaps);
        let r = analyze(&events, t0).unwrap();
        let n_gaps = gaps.len() - 1;
        let sum_itl = r.itl_mean.map_or(0.0, |m| m * n_gaps as f64);
        let last = events.last().unwrap().timestamp_ns - t0;
        prop_assert!((sum_itl + r.ttft - last as f64 / 1e9).abs() < 1e-9);
        prop_assert!(r.ttft <= r.wall_total);
        prop_assert_eq!(r.degenerate, gaps.len() == 1);
        prop_assert!((r.audio_seconds_out - gaps.len() as f64 * 4096.0 / 44100.0).abs() < 1e-9);
        prop_assert!((r.token_gen_total + r.waveform_total - last as f64 / 1e9).abs() < 1e-9);
    }

    #[test]
    fn shifting_time_shifts_only_ttft((t0, gaps) in stream(), delta in 0u64..1_000_000_000) {
        let events = events_from(t0, &gaps);
        let base = analyze(&events, t0).unwrap();
        let shifted: Vec<TokenEvent> = events
            .iter()
            .map(|e| TokenEvent { timestamp_ns: e.timestamp_ns + delta, ..*e })
            .collect();
        let r = analyze(&shifted, t0).unwrap();
        prop_assert_eq!(r.itl_mean, base.itl_mean);
        prop_assert_eq!(r.itl_p50, base.itl_p50);
        prop_assert_eq!(r.itl_p95, base.itl_p95);
        prop_assert!((r.ttft - base.ttft - delta as f64 / 1e9).abs() < 1e-9);
    }
}
