//! Speech-generation latency: time to first audio token, inter-token
//! latency and the split between token generation and waveform synthesis,
//! computed from timestamped token events.

use serde::{Deserialize, Serialize};

use crate::codec::{REFERENCE_COMPRESSION, REFERENCE_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::rvq::RvqCode;
use crate::tts::{synthesize, Synthesis, TokenEvent, TokenKind};

pub use crate::tts::{ChunkSynth, Clock, MonotonicClock, SimClock, TokenGenerator};

/// Reported time to first token.
pub const REFERENCE_TTFT_NS: u64 = 150_000_000;
/// Reported inter-token latency.
pub const REFERENCE_ITL_NS: u64 = 60_000_000;

const NS: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub audio_tokens: usize,
    pub ttft: f64,
    pub itl_mean: Option<f64>,
    pub itl_p50: Option<f64>,
    pub itl_p95: Option<f64>,
    pub token_gen_total: f64,
    pub waveform_total: f64,
    pub audio_seconds_out: f64,
    pub wall_total: f64,
    /// Set when a single audio event leaves no interval to measure.
    pub degenerate: bool,
}

impl LatencyReport {
    /// One `key=value` line per field; absent values print as `none`.
    pub fn to_key_value(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        [
            format!("audio_tokens={}", self.audio_tokens),
            format!("ttft={}", self.ttft),
            format!("itl_mean={}", opt(self.itl_mean)),
            format!("itl_p50={}", opt(self.itl_p50)),
            format!("itl_p95={}", opt(self.itl_p95)),
            format!("token_gen_total={}", self.token_gen_total),
            format!("waveform_total={}", self.waveform_total),
            format!("audio_seconds_out={}", self.audio_seconds_out),
            format!("wall_total={}", self.wall_total),
            format!("degenerate={}", self.degenerate),
        ]
        .join("\n")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Nearest-rank percentile of sorted values.
pub fn nearest_rank(sorted: &[u64], percentile: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Reduces an event stream started at `t0_ns` to a report.
///
/// A token's generation time runs from its text event (or the previous audio
/// event when the log has none) to its audio event, minus the synthesis time
/// that event carries.
pub fn analyze(events: &[TokenEvent], t0_ns: u64) -> Result<LatencyReport> {
    let mut last = t0_ns;
    for e in events {
        if e.timestamp_ns < last {
            return Err(Error::InvalidSignal(format!(
                "event {} {} at {} ns precedes {} ns",
                e.kind, e.index, e.timestamp_ns, last
            )));
        }
        last = e.timestamp_ns;
    }
    let audio: Vec<&TokenEvent> = events.iter().filter(|e| e.kind == TokenKind::Audio).collect();
    let first = audio.first().ok_or(Error::EmptyStream)?;
    let mut gaps: Vec<u64> = audio.windows(2).map(|w| w[1].timestamp_ns - w[0].timestamp_ns).collect();
    let itl_mean = (!gaps.is_empty()).then(|| gaps.iter().sum::<u64>() as f64 / gaps.len() as f64 / NS);
    gaps.sort_unstable();
    let pct = |p: f64| nearest_rank(&gaps, p).map(|v| v as f64 / NS);

    let mut gen_ns: u64 = 0;
    let mut synth_ns: u64 = 0;
    let mut prev_audio = t0_ns;
    for a in &audio {
        let start = events
            .iter()
            .find(|e| e.kind == TokenKind::Text && e.index == a.index)
            .map_or(prev_audio, |t| t.timestamp_ns);
        let synth = a.synth_ns.unwrap_or(0);
        gen_ns += a.timestamp_ns.saturating_sub(start).saturating_sub(synth);
        synth_ns += synth;
        prev_audio = a.timestamp_ns;
    }
    Ok(LatencyReport {
        audio_tokens: audio.len(),
        ttft: (first.timestamp_ns - t0_ns) as f64 / NS,
        itl_mean,
        itl_p50: pct(50.0),
        itl_p95: pct(95.0),
        token_gen_total: gen_ns as f64 / NS,
        waveform_total: synth_ns as f64 / NS,
        audio_seconds_out: audio_seconds(audio.len()),
        wall_total: (last - t0_ns) as f64 / NS,
        degenerate: audio.len() == 1,
    })
}

/// Seconds of audio carried by `tokens` codec frames.
pub fn audio_seconds(tokens: usize) -> f64 {
    (tokens * REFERENCE_COMPRESSION) as f64 / REFERENCE_SAMPLE_RATE as f64
}

/// [`analyze`] with the stream starting at its first event, so a saved log
/// alone reproduces the report.
pub fn analyze_stream(events: &[TokenEvent]) -> Result<LatencyReport> {
    let t0 = events.first().ok_or(Error::EmptyStream)?.timestamp_ns;
    analyze(events, t0)
}

/// Runs [`synthesize`] and analyses its events from the arrival of the
/// first text token.
pub fn bench_synthesize(
    text: &[u32],
    generator: &mut impl TokenGenerator,
    synth: &mut impl ChunkSynth,
    clock: &impl Clock,
) -> Result<(LatencyReport, Synthesis)> {
    let out = synthesize(text, generator, synth, clock)?;
    Ok((analyze_stream(&out.events)?, out))
}

/// An evenly paced stream starting at 0: token `k`'s text arrives when
/// token `k-1`'s audio is emitted, and audio `k` lands at `ttft + k·itl`.
pub fn simulated_events(tokens: usize, ttft_ns: u64, itl_ns: u64) -> Vec<TokenEvent> {
    let mut events = Vec::with_capacity(2 * tokens);
    let mut prev = 0;
    for k in 0..tokens {
        let at = ttft_ns + k as u64 * itl_ns;
        events.push(TokenEvent {
            kind: TokenKind::Text,
            index: k,
            timestamp_ns: prev,
            synth_ns: None,
        });
        events.push(TokenEvent {
            kind: TokenKind::Audio,
            index: k,
            timestamp_ns: at,
            synth_ns: None,
        });
        prev = at;
    }
    events
}

/// Generator that spends a fixed simulated time per step and returns all-zero codes.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    pub clock: SimClock,
    pub step_ns: u64,
    pub levels: usize,
}

impl TokenGenerator for MockGenerator {
    fn step(&mut self, _text: u32) -> Result<RvqCode> {
        self.clock.advance(self.step_ns);
        Ok(RvqCode::new(vec![0; self.levels]))
    }
}

/// Synthesiser that spends a fixed simulated time per chunk and returns silence.
#[derive(Debug, Clone)]
pub struct MockSynth {
    pub clock: SimClock,
    pub synth_ns: u64,
    pub chunk: usize,
    pub sample_rate: u32,
}

impl ChunkSynth for MockSynth {
    fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    fn synth(&mut self, _code: &RvqCode) -> Result<Vec<f32>> {
        self.clock.advance(self.synth_ns);
        Ok(vec![0.0; self.chunk])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_definition() {
        let v = [10, 20, 30, 40, 50];
        assert_eq!(nearest_rank(&v, 50.0), Some(30));
        assert_eq!(nearest_rank(&v, 95.0), Some(50));
        assert_eq!(nearest_rank(&v, 0.0), Some(10));
        assert_eq!(nearest_rank(&[], 50.0), None);
    }

    #[test]
    fn out_of_order_events_are_rejected() {
        let mut ev = simulated_events(3, 10, 5);
        ev.swap(1, 3);
        assert!(matches!(analyze(&ev, 0), Err(Error::InvalidSignal(_))));
    }
}
