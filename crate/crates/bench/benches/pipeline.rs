use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use streamvox::codec::StreamState;
use streamvox::dsp::{stft, AudioBuffer};
use streamvox::latency::{analyze, simulated_events, REFERENCE_ITL_NS, REFERENCE_TTFT_NS};
use streamvox::tts::{tokenize, Session};
use streamvox_bench::*;

fn dsp(c: &mut Criterion) {
    let tone = AudioBuffer::tone(440.0, 0.5, 0.0, 44_100, 44_100).unwrap();
    c.bench_function("stft 1s 32/8", |b| b.iter(|| stft(black_box(&tone), 32, 8).unwrap()));
}

fn rvq(c: &mut Criterion) {
    let books = random_books(8, 64, 24, 0);
    let xs = random_vectors(256, 24, 1);
    c.bench_function("rvq encode 256x L8 K64 D24", |b| {
        b.iter(|| xs.iter().map(|x| books.encode(black_box(x)).unwrap()).count())
    });
    let full = random_books(72, 1024, 512, 2);
    let x = random_vectors(1, 512, 3).remove(0);
    c.bench_function("rvq encode 1x L72 K1024 D512", |b| b.iter(|| full.encode(black_box(&x)).unwrap()));
}

fn codec(c: &mut Criterion) {
    let model = toy_codec(0);
    let books = random_books(8, 64, 24, 0);
    let codes = random_codes(16, &books, 4);
    c.bench_function("codec stream 16 frames (toy)", |b| {
        b.iter_batched(
            || StreamState::new(&model),
            |mut state| {
                for code in &codes {
                    model.streaming_decode(&mut state, code, &books).unwrap();
                }
            },
            BatchSize::SmallInput,
        )
    });
    let second = AudioBuffer::tone(220.0, 0.4, 0.0, 44_100, 44_100).unwrap();
    c.bench_function("codec encode 1s (toy)", |b| b.iter(|| model.encode(black_box(&second)).unwrap()));
}

fn tts(c: &mut Criterion) {
    let model = toy_tts(0);
    let books = random_books(8, 64, 24, 0);
    let text = tokenize("the quick brown fox");
    c.bench_function("tts session 19 tokens (toy)", |b| {
        b.iter(|| {
            let mut s = Session::new(&model, &books, 0).unwrap();
            for &t in &text {
                s.step_traced(t).unwrap();
            }
        })
    });
}

fn latency(c: &mut Criterion) {
    let events = simulated_events(108, REFERENCE_TTFT_NS, REFERENCE_ITL_NS);
    c.bench_function("analyze 108 tokens", |b| b.iter(|| analyze(black_box(&events), 0).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = dsp, rvq, codec, tts, latency
}
criterion_main!(benches);
