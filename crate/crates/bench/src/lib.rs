//! Seeded fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamvox::codec::{CodecConfig, CodecModel};
use streamvox::rvq::{CodebookSet, RvqCode};
use streamvox::tts::{TtsConfig, TtsModel};

pub fn toy_codec(seed: u64) -> CodecModel {
    CodecModel::new(CodecConfig::toy(), &mut ChaCha8Rng::seed_from_u64(seed)).expect("toy codec config is valid")
}

pub fn toy_tts(seed: u64) -> TtsModel {
    TtsModel::new(TtsConfig::toy(), &mut ChaCha8Rng::seed_from_u64(seed)).expect("toy tts config is valid")
}

/// Uniform codewords shrinking by half per level.
pub fn random_books(levels: usize, entries: usize, dim: usize, seed: u64) -> CodebookSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codewords = (0..levels)
        .flat_map(|l| {
            let scale = 0.5f32.powi(l as i32);
            (0..entries * dim).map(|_| scale * rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>()
        })
        .collect();
    CodebookSet::new(levels, entries, dim, codewords).expect("valid shape")
}

pub fn random_vectors(count: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect()
}

pub fn random_codes(count: usize, books: &CodebookSet, seed: u64) -> Vec<RvqCode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| RvqCode::new((0..books.levels()).map(|_| rng.random_range(0..books.entries())).collect()))
        .collect()
}
